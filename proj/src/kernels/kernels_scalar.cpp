#include <cmath>
#include <cstdint>

#include "moca/kernels/kernels.hpp"

// Reference kernels. Plain loops, no intrinsics; the AVX2 variants are
// equivalence-tested against these.

namespace moca::kernels {
namespace {

void gemm_nn_s(int64_t m, int64_t n, int64_t k,
               const float* a, int64_t lda,
               const float* b, int64_t ldb,
               float* c, int64_t ldc,
               float alpha, float beta) {
    for (int64_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        if (beta == 0.0f) {
            for (int64_t j = 0; j < n; ++j) crow[j] = 0.0f;
        } else if (beta != 1.0f) {
            for (int64_t j = 0; j < n; ++j) crow[j] *= beta;
        }
        for (int64_t p = 0; p < k; ++p) {
            float av = alpha * a[i * lda + p];
            const float* brow = b + p * ldb;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_s(int64_t m, int64_t n, int64_t k,
               const float* a, int64_t lda,
               const float* b, int64_t ldb,
               float* c, int64_t ldc,
               float alpha, float beta) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * lda;
        for (int64_t j = 0; j < n; ++j) {
            const float* brow = b + j * ldb;
            float acc = 0.0f;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            float prev = (beta == 0.0f) ? 0.0f : beta * c[i * ldc + j];
            c[i * ldc + j] = prev + alpha * acc;
        }
    }
}

void gemm_tn_s(int64_t m, int64_t n, int64_t k,
               const float* a, int64_t lda,
               const float* b, int64_t ldb,
               float* c, int64_t ldc,
               float alpha, float beta) {
    for (int64_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        if (beta == 0.0f) {
            for (int64_t j = 0; j < n; ++j) crow[j] = 0.0f;
        } else if (beta != 1.0f) {
            for (int64_t j = 0; j < n; ++j) crow[j] *= beta;
        }
        for (int64_t p = 0; p < k; ++p) {
            float av = alpha * a[p * lda + i];
            const float* brow = b + p * ldb;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void axpby_s(int64_t n, float a, const float* x, float b, const float* y, float* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void axpy_acc_s(int64_t n, float a, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_s(int64_t n, float a, float* x) {
    for (int64_t i = 0; i < n; ++i) x[i] *= a;
}

void vadd_s(int64_t n, const float* x, const float* y, float* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void vmul_s(int64_t n, const float* x, const float* y, float* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void guidance_combine_s(int64_t n, const float* u0, const float* ui,
                        const float* ut, const float* um,
                        float si, float st, float sm, float* out) {
    for (int64_t i = 0; i < n; ++i) {
        out[i] = u0[i] + si * (ui[i] - u0[i]) + st * (ut[i] - ui[i]) + sm * (um[i] - ut[i]);
    }
}

void silu_s(int64_t n, const float* x, float* out) {
    for (int64_t i = 0; i < n; ++i) {
        float sig = 1.0f / (1.0f + std::exp(-x[i]));
        out[i] = x[i] * sig;
    }
}

void silu_backward_s(int64_t n, const float* x, const float* dy, float* dx) {
    for (int64_t i = 0; i < n; ++i) {
        float sig = 1.0f / (1.0f + std::exp(-x[i]));
        dx[i] = dy[i] * sig * (1.0f + x[i] * (1.0f - sig));
    }
}

void softmax_row_s(int64_t n, const float* x, float* out) {
    float mx = x[0];
    for (int64_t i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        float e = std::exp(x[i] - mx);
        out[i] = e;
        sum += e;
    }
    float inv = static_cast<float>(1.0 / sum);
    for (int64_t i = 0; i < n; ++i) out[i] *= inv;
}

double reduce_sum_s(int64_t n, const float* x) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double reduce_sumsq_s(int64_t n, const float* x) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
    return acc;
}

double reduce_dot_s(int64_t n, const float* x, const float* y) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * y[i];
    return acc;
}

float reduce_absmax_s(int64_t n, const float* x) {
    float mx = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
        float v = std::fabs(x[i]);
        mx = v > mx ? v : mx;
    }
    return mx;
}

void adam_step_s(int64_t n, float* p, float* m, float* v, const float* g,
                 float b1, float b2, float step_size, float inv_bc2, float eps) {
    for (int64_t i = 0; i < n; ++i) {
        float gi = g[i];
        m[i] = b1 * m[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
        p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t = {
        "scalar",
        gemm_nn_s, gemm_nt_s, gemm_tn_s,
        axpby_s, axpy_acc_s, scale_s, vadd_s, vmul_s,
        guidance_combine_s,
        silu_s, silu_backward_s,
        softmax_row_s,
        reduce_sum_s, reduce_sumsq_s, reduce_dot_s, reduce_absmax_s,
        adam_step_s,
    };
    return t;
}

}  // namespace moca::kernels
