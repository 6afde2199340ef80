#pragma once

#include <string>

#include "moca/core/tensor.hpp"

namespace moca::io {

// Raw tensor container: fixed 8-byte magic, version, dtype tag, shape, then
// row-major little-endian f32 payload. Used for schedule/flow fixtures.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace moca::io
