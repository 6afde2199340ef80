#pragma once

#include <cstdint>
#include <string>

namespace moca::kernels {

// Data-parallel inner loops used by the diffusion math, the denoiser network
// and the optimizer. Each op has a scalar reference implementation and an
// AVX2+FMA variant; the active table is chosen once at startup from cpuid and
// can be forced with MOCA_KERNELS=scalar|avx2 (tests use this to cross-check
// the two paths on identical inputs).
//
// All matrices are row-major f32. Reductions accumulate in double.

struct KernelTable {
    const char* name;

    // C[m x n] = alpha * A[m x k] * B[k x n] + beta * C
    void (*gemm_nn)(int64_t m, int64_t n, int64_t k,
                    const float* a, int64_t lda,
                    const float* b, int64_t ldb,
                    float* c, int64_t ldc,
                    float alpha, float beta);
    // C[m x n] = alpha * A[m x k] * B[n x k]^T + beta * C
    void (*gemm_nt)(int64_t m, int64_t n, int64_t k,
                    const float* a, int64_t lda,
                    const float* b, int64_t ldb,
                    float* c, int64_t ldc,
                    float alpha, float beta);
    // C[m x n] = alpha * A[k x m]^T * B[k x n] + beta * C
    void (*gemm_tn)(int64_t m, int64_t n, int64_t k,
                    const float* a, int64_t lda,
                    const float* b, int64_t ldb,
                    float* c, int64_t ldc,
                    float alpha, float beta);

    // out = a*x + b*y, elementwise
    void (*axpby)(int64_t n, float a, const float* x, float b, const float* y, float* out);
    // y += a*x
    void (*axpy_acc)(int64_t n, float a, const float* x, float* y);
    void (*scale)(int64_t n, float a, float* x);
    void (*vadd)(int64_t n, const float* x, const float* y, float* out);
    void (*vmul)(int64_t n, const float* x, const float* y, float* out);

    // Three-term classifier-free guidance combine:
    // out = u0 + si*(ui - u0) + st*(ut - ui) + sm*(um - ut)
    void (*guidance_combine)(int64_t n, const float* u0, const float* ui,
                             const float* ut, const float* um,
                             float si, float st, float sm, float* out);

    void (*silu)(int64_t n, const float* x, float* out);
    // dx = dy * d(silu)/dx evaluated at x
    void (*silu_backward)(int64_t n, const float* x, const float* dy, float* dx);

    // numerically stable softmax over one row, in place allowed (out may alias x)
    void (*softmax_row)(int64_t n, const float* x, float* out);

    double (*reduce_sum)(int64_t n, const float* x);
    double (*reduce_sumsq)(int64_t n, const float* x);
    double (*reduce_dot)(int64_t n, const float* x, const float* y);
    float (*reduce_absmax)(int64_t n, const float* x);

    // Fused Adam step with bias-corrected learning rate folded into `step_size`:
    //   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
    //   p -= step_size * m / (sqrt(v / bc2) + eps)   with bc2 = 1 - b2^t folded by caller
    // Caller passes step_size = lr / (1 - b1^t) and inv_bc2 = 1 / (1 - b2^t).
    void (*adam_step)(int64_t n, float* p, float* m, float* v, const float* g,
                      float b1, float b2, float step_size, float inv_bc2, float eps);
};

// Table selected at process start (cpuid + MOCA_KERNELS override).
const KernelTable& active();

// Explicit tables, for equivalence tests.
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when the CPU lacks AVX2/FMA

bool cpu_has_avx2_fma();

}  // namespace moca::kernels
