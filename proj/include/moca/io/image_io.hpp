#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace moca::io {

// 8-bit RGB frame, row-major, 3 bytes per pixel.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;
};

void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

}  // namespace moca::io
