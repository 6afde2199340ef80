#include "moca/io/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "moca/core/error.hpp"

namespace moca::io {

static const char kMagic[8] = {'M', 'O', 'C', 'A', 'T', 'N', 'S', 'R'};
static const uint32_t kVersion = 1;
static const uint32_t kDtypeF32 = 0;

void write_tensor(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw runtime_failure("cannot open for write: " + path);
    f.write(kMagic, 8);
    uint32_t v = kVersion, dt = kDtypeF32, nd = static_cast<uint32_t>(t.ndim());
    f.write(reinterpret_cast<const char*>(&v), 4);
    f.write(reinterpret_cast<const char*>(&dt), 4);
    f.write(reinterpret_cast<const char*>(&nd), 4);
    for (int64_t d : t.shape) f.write(reinterpret_cast<const char*>(&d), 8);
    f.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * 4));
    if (!f) throw runtime_failure("write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw runtime_failure("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) {
        throw runtime_failure("not a tensor container: " + path);
    }
    uint32_t v = 0, dt = 0, nd = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    f.read(reinterpret_cast<char*>(&dt), 4);
    f.read(reinterpret_cast<char*>(&nd), 4);
    if (!f || v != kVersion) throw runtime_failure("unsupported tensor container version in " + path);
    if (dt != kDtypeF32) throw runtime_failure("unsupported dtype in " + path);
    if (nd > 8) throw runtime_failure("implausible rank in " + path);
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) f.read(reinterpret_cast<char*>(&d), 8);
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * 4));
    if (!f) throw runtime_failure("truncated tensor container: " + path);
    return t;
}

}  // namespace moca::io
