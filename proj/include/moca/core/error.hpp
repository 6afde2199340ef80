#pragma once

#include <stdexcept>
#include <string>

namespace moca {

// Thrown for bad user input: malformed configs, files, flags. Maps to exit code 2.
struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for failures at run time: shape mismatches, IO errors, numeric blowups. Exit code 1.
struct runtime_failure : std::runtime_error {
    explicit runtime_failure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace moca
