#include <cstdlib>
#include <cstring>

#include "moca/kernels/kernels.hpp"

namespace moca::kernels {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

const KernelTable& select() {
    const char* force = std::getenv("MOCA_KERNELS");
    if (force != nullptr) {
        if (std::strcmp(force, "scalar") == 0) return scalar_table();
        if (std::strcmp(force, "avx2") == 0 && avx2_table() != nullptr) return *avx2_table();
    }
    if (const KernelTable* t = avx2_table()) return *t;
    return scalar_table();
}

}  // namespace

const KernelTable& active() {
    static const KernelTable& t = select();
    return t;
}

}  // namespace moca::kernels
