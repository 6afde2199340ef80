#include <cmath>
#include <cstdint>

#include "moca/kernels/kernels.hpp"

// AVX2+FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the cpuid check in dispatch.cpp.

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define MOCA_BUILD_AVX2 1
#include <immintrin.h>
#else
#define MOCA_BUILD_AVX2 0
#endif

namespace moca::kernels {

#if MOCA_BUILD_AVX2

namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

inline double hsum4d(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

// 4x16 register-blocked panel: 8 accumulators, broadcast A, stream B.
void gemm_nn_panel4x16(int64_t n16, int64_t k,
                       const float* a, int64_t lda,
                       const float* b, int64_t ldb,
                       float* c, int64_t ldc,
                       float alpha, float beta) {
    __m256 acc[4][2];
    for (int r = 0; r < 4; ++r)
        for (int s = 0; s < 2; ++s) acc[r][s] = _mm256_setzero_ps();
    for (int64_t p = 0; p < k; ++p) {
        __m256 b0 = _mm256_loadu_ps(b + p * ldb);
        __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
        for (int r = 0; r < 4; ++r) {
            __m256 av = _mm256_broadcast_ss(a + r * lda + p);
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
    }
    __m256 valpha = _mm256_set1_ps(alpha);
    for (int r = 0; r < 4; ++r) {
        float* crow = c + r * ldc;
        for (int s = 0; s < 2; ++s) {
            __m256 res = _mm256_mul_ps(acc[r][s], valpha);
            if (beta != 0.0f) {
                __m256 prev = _mm256_loadu_ps(crow + 8 * s);
                res = _mm256_fmadd_ps(_mm256_set1_ps(beta), prev, res);
            }
            _mm256_storeu_ps(crow + 8 * s, res);
        }
    }
    (void)n16;
}

// generic edge: any rows<=4, cols<n multiple handling in scalar
void gemm_nn_edge(int64_t rows, int64_t cols, int64_t k,
                  const float* a, int64_t lda,
                  const float* b, int64_t ldb,
                  float* c, int64_t ldc,
                  float alpha, float beta) {
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < cols; ++j) {
            float acc = 0.0f;
            for (int64_t p = 0; p < k; ++p) acc += a[i * lda + p] * b[p * ldb + j];
            float prev = (beta == 0.0f) ? 0.0f : beta * c[i * ldc + j];
            c[i * ldc + j] = prev + alpha * acc;
        }
    }
}

void gemm_nn_v(int64_t m, int64_t n, int64_t k,
               const float* a, int64_t lda,
               const float* b, int64_t ldb,
               float* c, int64_t ldc,
               float alpha, float beta) {
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        int64_t j = 0;
        for (; j + 16 <= n; j += 16) {
            gemm_nn_panel4x16(16, k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, alpha, beta);
        }
        if (j < n) gemm_nn_edge(4, n - j, k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, alpha, beta);
    }
    if (i < m) gemm_nn_edge(m - i, n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, alpha, beta);
}

void gemm_nt_v(int64_t m, int64_t n, int64_t k,
               const float* a, int64_t lda,
               const float* b, int64_t ldb,
               float* c, int64_t ldc,
               float alpha, float beta) {
    int64_t kv = k & ~int64_t(7);
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * lda;
        int64_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const float* b0 = b + j * ldb;
            const float* b1 = b + (j + 1) * ldb;
            const float* b2 = b + (j + 2) * ldb;
            const float* b3 = b + (j + 3) * ldb;
            __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
            __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
            for (int64_t p = 0; p < kv; p += 8) {
                __m256 av = _mm256_loadu_ps(arow + p);
                s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), s0);
                s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), s1);
                s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), s2);
                s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), s3);
            }
            float d0 = hsum8(s0), d1 = hsum8(s1), d2 = hsum8(s2), d3 = hsum8(s3);
            for (int64_t p = kv; p < k; ++p) {
                float av = arow[p];
                d0 += av * b0[p];
                d1 += av * b1[p];
                d2 += av * b2[p];
                d3 += av * b3[p];
            }
            float* cp = c + i * ldc + j;
            if (beta == 0.0f) {
                cp[0] = alpha * d0;
                cp[1] = alpha * d1;
                cp[2] = alpha * d2;
                cp[3] = alpha * d3;
            } else {
                cp[0] = beta * cp[0] + alpha * d0;
                cp[1] = beta * cp[1] + alpha * d1;
                cp[2] = beta * cp[2] + alpha * d2;
                cp[3] = beta * cp[3] + alpha * d3;
            }
        }
        for (; j < n; ++j) {
            const float* brow = b + j * ldb;
            __m256 s0 = _mm256_setzero_ps();
            for (int64_t p = 0; p < kv; p += 8) {
                s0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), s0);
            }
            float d = hsum8(s0);
            for (int64_t p = kv; p < k; ++p) d += arow[p] * brow[p];
            float prev = (beta == 0.0f) ? 0.0f : beta * c[i * ldc + j];
            c[i * ldc + j] = prev + alpha * d;
        }
    }
}

void gemm_tn_v(int64_t m, int64_t n, int64_t k,
               const float* a, int64_t lda,
               const float* b, int64_t ldb,
               float* c, int64_t ldc,
               float alpha, float beta) {
    // same broadcast/stream structure as nn, A walked down its column
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        int64_t j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256 acc[4][2];
            for (int r = 0; r < 4; ++r)
                for (int s = 0; s < 2; ++s) acc[r][s] = _mm256_setzero_ps();
            for (int64_t p = 0; p < k; ++p) {
                __m256 b0 = _mm256_loadu_ps(b + p * ldb + j);
                __m256 b1 = _mm256_loadu_ps(b + p * ldb + j + 8);
                const float* ap = a + p * lda + i;
                for (int r = 0; r < 4; ++r) {
                    __m256 av = _mm256_broadcast_ss(ap + r);
                    acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
                }
            }
            __m256 valpha = _mm256_set1_ps(alpha);
            for (int r = 0; r < 4; ++r) {
                float* crow = c + (i + r) * ldc + j;
                for (int s = 0; s < 2; ++s) {
                    __m256 res = _mm256_mul_ps(acc[r][s], valpha);
                    if (beta != 0.0f) {
                        res = _mm256_fmadd_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(crow + 8 * s), res);
                    }
                    _mm256_storeu_ps(crow + 8 * s, res);
                }
            }
        }
        for (; j < n; ++j) {
            for (int64_t r = 0; r < 4; ++r) {
                float acc = 0.0f;
                for (int64_t p = 0; p < k; ++p) acc += a[p * lda + i + r] * b[p * ldb + j];
                float prev = (beta == 0.0f) ? 0.0f : beta * c[(i + r) * ldc + j];
                c[(i + r) * ldc + j] = prev + alpha * acc;
            }
        }
    }
    for (; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (int64_t p = 0; p < k; ++p) acc += a[p * lda + i] * b[p * ldb + j];
            float prev = (beta == 0.0f) ? 0.0f : beta * c[i * ldc + j];
            c[i * ldc + j] = prev + alpha * acc;
        }
    }
}

void axpby_v(int64_t n, float a, const float* x, float b, const float* y, float* out) {
    __m256 va = _mm256_set1_ps(a), vb = _mm256_set1_ps(b);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 r = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
        r = _mm256_fmadd_ps(vb, _mm256_loadu_ps(y + i), r);
        _mm256_storeu_ps(out + i, r);
    }
    for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void axpy_acc_v(int64_t n, float a, const float* x, float* y) {
    __m256 va = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 r = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        _mm256_storeu_ps(y + i, r);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_v(int64_t n, float a, float* x) {
    __m256 va = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) x[i] *= a;
}

void vadd_v(int64_t n, const float* x, const float* y, float* out) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void vmul_v(int64_t n, const float* x, const float* y, float* out) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void guidance_combine_v(int64_t n, const float* u0, const float* ui,
                        const float* ut, const float* um,
                        float si, float st, float sm, float* out) {
    __m256 vsi = _mm256_set1_ps(si), vst = _mm256_set1_ps(st), vsm = _mm256_set1_ps(sm);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 a = _mm256_loadu_ps(u0 + i);
        __m256 b = _mm256_loadu_ps(ui + i);
        __m256 c = _mm256_loadu_ps(ut + i);
        __m256 d = _mm256_loadu_ps(um + i);
        __m256 r = a;
        r = _mm256_fmadd_ps(vsi, _mm256_sub_ps(b, a), r);
        r = _mm256_fmadd_ps(vst, _mm256_sub_ps(c, b), r);
        r = _mm256_fmadd_ps(vsm, _mm256_sub_ps(d, c), r);
        _mm256_storeu_ps(out + i, r);
    }
    for (; i < n; ++i) {
        out[i] = u0[i] + si * (ui[i] - u0[i]) + st * (ut[i] - ui[i]) + sm * (um[i] - ut[i]);
    }
}

void silu_v(int64_t n, const float* x, float* out) {
    // exp stays scalar (libm); the mul/div around it vectorize poorly anyway
    for (int64_t i = 0; i < n; ++i) {
        float sig = 1.0f / (1.0f + std::exp(-x[i]));
        out[i] = x[i] * sig;
    }
}

void silu_backward_v(int64_t n, const float* x, const float* dy, float* dx) {
    for (int64_t i = 0; i < n; ++i) {
        float sig = 1.0f / (1.0f + std::exp(-x[i]));
        dx[i] = dy[i] * sig * (1.0f + x[i] * (1.0f - sig));
    }
}

void softmax_row_v(int64_t n, const float* x, float* out) {
    int64_t i = 0;
    __m256 vmx = _mm256_set1_ps(-3.4e38f);
    for (; i + 8 <= n; i += 8) vmx = _mm256_max_ps(vmx, _mm256_loadu_ps(x + i));
    float mx;
    {
        __m128 lo = _mm_max_ps(_mm256_castps256_ps128(vmx), _mm256_extractf128_ps(vmx, 1));
        lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
        lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
        mx = _mm_cvtss_f32(lo);
    }
    for (; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        float e = std::exp(x[j] - mx);
        out[j] = e;
        sum += e;
    }
    float inv = static_cast<float>(1.0 / sum);
    scale_v(n, inv, out);
}

double reduce_sum_v(int64_t n, const float* x) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
        acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
    }
    double s = hsum4d(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double reduce_sumsq_v(int64_t n, const float* x) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
        __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
        acc = _mm256_fmadd_pd(lo, lo, acc);
        acc = _mm256_fmadd_pd(hi, hi, acc);
    }
    double s = hsum4d(acc);
    for (; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
    return s;
}

double reduce_dot_v(int64_t n, const float* x, const float* y) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vx = _mm256_loadu_ps(x + i);
        __m256 vy = _mm256_loadu_ps(y + i);
        acc = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(vx)),
                              _mm256_cvtps_pd(_mm256_castps256_ps128(vy)), acc);
        acc = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)),
                              _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1)), acc);
    }
    double s = hsum4d(acc);
    for (; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
    return s;
}

float reduce_absmax_v(int64_t n, const float* x) {
    const __m256 signmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
    __m256 vmx = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        vmx = _mm256_max_ps(vmx, _mm256_and_ps(signmask, _mm256_loadu_ps(x + i)));
    }
    __m128 lo = _mm_max_ps(_mm256_castps256_ps128(vmx), _mm256_extractf128_ps(vmx, 1));
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    float mx = _mm_cvtss_f32(lo);
    for (; i < n; ++i) {
        float v = std::fabs(x[i]);
        mx = v > mx ? v : mx;
    }
    return mx;
}

void adam_step_v(int64_t n, float* p, float* m, float* v, const float* g,
                 float b1, float b2, float step_size, float inv_bc2, float eps) {
    __m256 vb1 = _mm256_set1_ps(b1), vb2 = _mm256_set1_ps(b2);
    __m256 v1mb1 = _mm256_set1_ps(1.0f - b1), v1mb2 = _mm256_set1_ps(1.0f - b2);
    __m256 vss = _mm256_set1_ps(step_size), veps = _mm256_set1_ps(eps);
    __m256 vibc2 = _mm256_set1_ps(inv_bc2);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 gi = _mm256_loadu_ps(g + i);
        __m256 mi = _mm256_fmadd_ps(v1mb1, gi, _mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)));
        __m256 vi = _mm256_fmadd_ps(v1mb2, _mm256_mul_ps(gi, gi), _mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vi, vibc2)), veps);
        __m256 upd = _mm256_div_ps(_mm256_mul_ps(vss, mi), denom);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
    }
    for (; i < n; ++i) {
        float gi = g[i];
        m[i] = b1 * m[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
        p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
}

}  // namespace

const KernelTable* avx2_table() {
    if (!cpu_has_avx2_fma()) return nullptr;
    static const KernelTable t = {
        "avx2",
        gemm_nn_v, gemm_nt_v, gemm_tn_v,
        axpby_v, axpy_acc_v, scale_v, vadd_v, vmul_v,
        guidance_combine_v,
        silu_v, silu_backward_v,
        softmax_row_v,
        reduce_sum_v, reduce_sumsq_v, reduce_dot_v, reduce_absmax_v,
        adam_step_v,
    };
    return &t;
}

#else  // !MOCA_BUILD_AVX2

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace moca::kernels
