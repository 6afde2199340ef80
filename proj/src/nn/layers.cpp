#include "moca/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "moca/kernels/kernels.hpp"

namespace moca::nn {

using kernels::active;

void P::init_normal(Rng& rng, std::vector<int64_t> shape, double stdev) {
    v = Tensor(shape);
    for (auto& x : v.data) x = static_cast<float>(rng.normal() * stdev);
    g = Tensor(std::move(shape));
}

void P::init_zero(std::vector<int64_t> shape) {
    v = Tensor(shape);
    g = Tensor(std::move(shape));
}

void P::init_const(std::vector<int64_t> shape, float value) {
    v = Tensor(shape);
    v.fill(value);
    g = Tensor(std::move(shape));
}

Tensor linear_fwd(const Tensor& x, const P& w, const P& b) {
    const int64_t n = x.dim(0), in = x.dim(1), out = w.v.dim(0);
    if (in != w.v.dim(1)) throw runtime_failure("linear: input width " + std::to_string(in) +
                                                " vs weight " + w.v.shape_str());
    Tensor y({n, out});
    active().gemm_nt(n, out, in, x.ptr(), in, w.v.ptr(), in, y.ptr(), out, 1.0f, 0.0f);
    for (int64_t i = 0; i < n; ++i)
        active().axpy_acc(out, 1.0f, b.v.ptr(), y.ptr() + i * out);
    return y;
}

Tensor linear_bwd(const Tensor& x, P& w, P& b, const Tensor& dy) {
    const int64_t n = x.dim(0), in = x.dim(1), out = w.v.dim(0);
    // dw += dy^T x ; db += column-sum(dy) ; dx = dy w
    active().gemm_tn(out, in, n, dy.ptr(), out, x.ptr(), in, w.g.ptr(), in, 1.0f, 1.0f);
    for (int64_t i = 0; i < n; ++i)
        active().axpy_acc(out, 1.0f, dy.ptr() + i * out, b.g.ptr());
    Tensor dx({n, in});
    active().gemm_nn(n, in, out, dy.ptr(), out, w.v.ptr(), in, dx.ptr(), in, 1.0f, 0.0f);
    return dx;
}

namespace {

struct ConvDims {
    int64_t n, cin, h, w, cout, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int sh, int sw, int ph, int pw) {
    ConvDims d;
    d.n = x.dim(0); d.cin = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
    d.cout = w.dim(0); d.kh = w.dim(2); d.kw = w.dim(3);
    if (w.dim(1) != d.cin)
        throw runtime_failure("conv2d: x has " + std::to_string(d.cin) + " channels, w expects " +
                              std::to_string(w.dim(1)));
    d.oh = (d.h + 2 * ph - d.kh) / sh + 1;
    d.ow = (d.w + 2 * pw - d.kw) / sw + 1;
    return d;
}

// columns [cin*kh*kw, oh*ow] for one image
void im2col(const float* x, const ConvDims& d, int sh, int sw, int ph, int pw, float* col) {
    const int64_t span = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin; ++c) {
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                float* dst = col + ((c * d.kh + ky) * d.kw + kx) * span;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    int64_t iy = oy * sh + ky - ph;
                    if (iy < 0 || iy >= d.h) {
                        for (int64_t ox = 0; ox < d.ow; ++ox) dst[oy * d.ow + ox] = 0.0f;
                        continue;
                    }
                    const float* src = x + (c * d.h + iy) * d.w;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        int64_t ix = ox * sw + kx - pw;
                        dst[oy * d.ow + ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

// scatter-add of columns back into an image
void col2im_acc(const float* col, const ConvDims& d, int sh, int sw, int ph, int pw, float* x) {
    const int64_t span = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin; ++c) {
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                const float* src = col + ((c * d.kh + ky) * d.kw + kx) * span;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    int64_t iy = oy * sh + ky - ph;
                    if (iy < 0 || iy >= d.h) continue;
                    float* dst = x + (c * d.h + iy) * d.w;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        int64_t ix = ox * sw + kx - pw;
                        if (ix >= 0 && ix < d.w) dst[ix] += src[oy * d.ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d_fwd(const Tensor& x, const P& w, const P& b, int sh, int sw, int ph, int pw) {
    ConvDims d = conv_dims(x, w.v, sh, sw, ph, pw);
    const int64_t patch = d.cin * d.kh * d.kw, span = d.oh * d.ow;
    Tensor y({d.n, d.cout, d.oh, d.ow});
    std::vector<float> col(static_cast<size_t>(patch * span));
    for (int64_t i = 0; i < d.n; ++i) {
        im2col(x.ptr() + i * d.cin * d.h * d.w, d, sh, sw, ph, pw, col.data());
        float* yi = y.ptr() + i * d.cout * span;
        active().gemm_nn(d.cout, span, patch, w.v.ptr(), patch, col.data(), span, yi, span, 1.0f, 0.0f);
        for (int64_t c = 0; c < d.cout; ++c) {
            float bc = b.v[c];
            float* row = yi + c * span;
            for (int64_t p = 0; p < span; ++p) row[p] += bc;
        }
    }
    return y;
}

Tensor conv2d_bwd(const Tensor& x, P& w, P& b, const Tensor& dy, int sh, int sw, int ph, int pw) {
    ConvDims d = conv_dims(x, w.v, sh, sw, ph, pw);
    const int64_t patch = d.cin * d.kh * d.kw, span = d.oh * d.ow;
    Tensor dx({d.n, d.cin, d.h, d.w});
    std::vector<float> col(static_cast<size_t>(patch * span));
    std::vector<float> dcol(static_cast<size_t>(patch * span));
    for (int64_t i = 0; i < d.n; ++i) {
        const float* dyi = dy.ptr() + i * d.cout * span;
        im2col(x.ptr() + i * d.cin * d.h * d.w, d, sh, sw, ph, pw, col.data());
        // dw += dy_i col^T
        active().gemm_nt(d.cout, patch, span, dyi, span, col.data(), span, w.g.ptr(), patch, 1.0f, 1.0f);
        // db += row sums of dy_i
        for (int64_t c = 0; c < d.cout; ++c)
            b.g[c] += static_cast<float>(active().reduce_sum(span, dyi + c * span));
        // dcol = w^T dy_i, scattered back into dx
        active().gemm_tn(patch, span, d.cout, w.v.ptr(), patch, dyi, span, dcol.data(), span, 1.0f, 0.0f);
        col2im_acc(dcol.data(), d, sh, sw, ph, pw, dx.ptr() + i * d.cin * d.h * d.w);
    }
    return dx;
}

Tensor groupnorm_fwd(const Tensor& x, const P& gamma, const P& beta, int groups, GnCache& cache) {
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (c % groups != 0) throw runtime_failure("groupnorm: channels not divisible by groups");
    const int64_t cg = c / groups, m = cg * hw;
    const double eps = 1e-5;
    cache.mean = Tensor({n, groups});
    cache.invstd = Tensor({n, groups});
    Tensor y(x.shape);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t g = 0; g < groups; ++g) {
            const float* xs = x.ptr() + (i * c + g * cg) * hw;
            double mean = active().reduce_sum(m, xs) / static_cast<double>(m);
            double ssq = active().reduce_sumsq(m, xs) / static_cast<double>(m);
            double var = ssq - mean * mean;
            double invstd = 1.0 / std::sqrt(var + eps);
            cache.mean[i * groups + g] = static_cast<float>(mean);
            cache.invstd[i * groups + g] = static_cast<float>(invstd);
            for (int64_t j = 0; j < cg; ++j) {
                float ga = gamma.v[g * cg + j], be = beta.v[g * cg + j];
                const float* xr = xs + j * hw;
                float* yr = y.ptr() + (i * c + g * cg + j) * hw;
                float a = static_cast<float>(invstd) * ga;
                float bb = static_cast<float>(be - mean * invstd * ga);
                for (int64_t p = 0; p < hw; ++p) yr[p] = a * xr[p] + bb;
            }
        }
    }
    return y;
}

Tensor groupnorm_bwd(const Tensor& x, const P& gamma, P& dgamma_into, P& dbeta_into,
                     const Tensor& dy, int groups, const GnCache& cache) {
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const int64_t cg = c / groups, m = cg * hw;
    Tensor dx(x.shape);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t g = 0; g < groups; ++g) {
            double mean = cache.mean[i * groups + g];
            double invstd = cache.invstd[i * groups + g];
            // first pass: per-channel param grads + the two group sums
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int64_t j = 0; j < cg; ++j) {
                const float* xr = x.ptr() + (i * c + g * cg + j) * hw;
                const float* dyr = dy.ptr() + (i * c + g * cg + j) * hw;
                double dg = 0.0, db = 0.0, s1 = 0.0, s2 = 0.0;
                for (int64_t p = 0; p < hw; ++p) {
                    double xh = (xr[p] - mean) * invstd;
                    double dxh = dyr[p] * gamma.v[g * cg + j];
                    dg += dyr[p] * xh;
                    db += dyr[p];
                    s1 += dxh;
                    s2 += dxh * xh;
                }
                dgamma_into.g[g * cg + j] += static_cast<float>(dg);
                dbeta_into.g[g * cg + j] += static_cast<float>(db);
                sum_dxhat += s1;
                sum_dxhat_xhat += s2;
            }
            // second pass: dx = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
            double inv_m = 1.0 / static_cast<double>(m);
            for (int64_t j = 0; j < cg; ++j) {
                const float* xr = x.ptr() + (i * c + g * cg + j) * hw;
                const float* dyr = dy.ptr() + (i * c + g * cg + j) * hw;
                float* dxr = dx.ptr() + (i * c + g * cg + j) * hw;
                double ga = gamma.v[g * cg + j];
                for (int64_t p = 0; p < hw; ++p) {
                    double xh = (xr[p] - mean) * invstd;
                    double dxh = dyr[p] * ga;
                    dxr[p] = static_cast<float>(invstd * (dxh - inv_m * sum_dxhat - xh * inv_m * sum_dxhat_xhat));
                }
            }
        }
    }
    return dx;
}

Tensor silu_fwd(const Tensor& x) {
    Tensor y(x.shape);
    active().silu(x.numel(), x.ptr(), y.ptr());
    return y;
}

Tensor silu_bwd(const Tensor& x, const Tensor& dy) {
    Tensor dx(x.shape);
    active().silu_backward(x.numel(), x.ptr(), dy.ptr(), dx.ptr());
    return dx;
}

Tensor attention_fwd(const Tensor& q, const Tensor& k, const Tensor& v, AttnCache& cache) {
    const int64_t nq = q.dim(0), d = q.dim(1), nk = k.dim(0);
    if (k.dim(1) != d || v.dim(0) != nk || v.dim(1) != d)
        throw runtime_failure("attention: inconsistent q/k/v shapes");
    float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
    cache.probs = Tensor({nq, nk});
    active().gemm_nt(nq, nk, d, q.ptr(), d, k.ptr(), d, cache.probs.ptr(), nk, scale, 0.0f);
    for (int64_t i = 0; i < nq; ++i)
        active().softmax_row(nk, cache.probs.ptr() + i * nk, cache.probs.ptr() + i * nk);
    Tensor out({nq, d});
    active().gemm_nn(nq, d, nk, cache.probs.ptr(), nk, v.ptr(), d, out.ptr(), d, 1.0f, 0.0f);
    return out;
}

void attention_bwd(const Tensor& q, const Tensor& k, const Tensor& v, const AttnCache& cache,
                   const Tensor& dout, Tensor& dq, Tensor& dk, Tensor& dv) {
    const int64_t nq = q.dim(0), d = q.dim(1), nk = k.dim(0);
    float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
    dq = Tensor({nq, d});
    dk = Tensor({nk, d});
    dv = Tensor({nk, d});
    // dv = P^T dout
    active().gemm_tn(nk, d, nq, cache.probs.ptr(), nk, dout.ptr(), d, dv.ptr(), d, 1.0f, 0.0f);
    // dP = dout v^T, then softmax backward row-wise into dS
    Tensor ds({nq, nk});
    active().gemm_nt(nq, nk, d, dout.ptr(), d, v.ptr(), d, ds.ptr(), nk, 1.0f, 0.0f);
    for (int64_t i = 0; i < nq; ++i) {
        const float* p = cache.probs.ptr() + i * nk;
        float* dsr = ds.ptr() + i * nk;
        double dot = active().reduce_dot(nk, p, dsr);
        for (int64_t j = 0; j < nk; ++j) dsr[j] = p[j] * (dsr[j] - static_cast<float>(dot));
    }
    // dq = dS k * scale ; dk = dS^T q * scale
    active().gemm_nn(nq, d, nk, ds.ptr(), nk, k.ptr(), d, dq.ptr(), d, scale, 0.0f);
    active().gemm_tn(nk, d, nq, ds.ptr(), nk, q.ptr(), d, dk.ptr(), d, scale, 0.0f);
}

Tensor upsample2x_fwd(const Tensor& x) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({n, c, 2 * h, 2 * w});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t yy = 0; yy < 2 * h; ++yy) {
                const float* src = x.ptr() + ((i * c + ch) * h + yy / 2) * w;
                float* dst = y.ptr() + ((i * c + ch) * 2 * h + yy) * 2 * w;
                for (int64_t xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
            }
    return y;
}

Tensor upsample2x_bwd(const Tensor& dy) {
    const int64_t n = dy.dim(0), c = dy.dim(1), h2 = dy.dim(2), w2 = dy.dim(3);
    const int64_t h = h2 / 2, w = w2 / 2;
    Tensor dx({n, c, h, w});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t yy = 0; yy < h2; ++yy) {
                const float* src = dy.ptr() + ((i * c + ch) * h2 + yy) * w2;
                float* dst = dx.ptr() + ((i * c + ch) * h + yy / 2) * w;
                for (int64_t xx = 0; xx < w2; ++xx) dst[xx / 2] += src[xx];
            }
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w)
        throw runtime_failure("concat_channels: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor y({n, ca + cb, h, w});
    const int64_t plane = h * w;
    for (int64_t i = 0; i < n; ++i) {
        std::copy(a.ptr() + i * ca * plane, a.ptr() + (i + 1) * ca * plane,
                  y.ptr() + i * (ca + cb) * plane);
        std::copy(b.ptr() + i * cb * plane, b.ptr() + (i + 1) * cb * plane,
                  y.ptr() + (i * (ca + cb) + ca) * plane);
    }
    return y;
}

void split_channels(const Tensor& d, int64_t ca, Tensor& da, Tensor& db) {
    const int64_t n = d.dim(0), c = d.dim(1), h = d.dim(2), w = d.dim(3);
    const int64_t cb = c - ca, plane = h * w;
    da = Tensor({n, ca, h, w});
    db = Tensor({n, cb, h, w});
    for (int64_t i = 0; i < n; ++i) {
        std::copy(d.ptr() + i * c * plane, d.ptr() + (i * c + ca) * plane, da.ptr() + i * ca * plane);
        std::copy(d.ptr() + (i * c + ca) * plane, d.ptr() + (i + 1) * c * plane, db.ptr() + i * cb * plane);
    }
}

Tensor to_time_major(const Tensor& x, int64_t b, int64_t t) {
    const int64_t c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y({b, c, t, hw});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ti = 0; ti < t; ++ti)
            for (int64_t ci = 0; ci < c; ++ci) {
                const float* src = x.ptr() + ((bi * t + ti) * c + ci) * hw;
                float* dst = y.ptr() + ((bi * c + ci) * t + ti) * hw;
                std::copy(src, src + hw, dst);
            }
    return y;
}

Tensor from_time_major(const Tensor& y, int64_t h, int64_t w) {
    const int64_t b = y.dim(0), c = y.dim(1), t = y.dim(2), hw = y.dim(3);
    Tensor x({b * t, c, h, w});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ti = 0; ti < t; ++ti)
            for (int64_t ci = 0; ci < c; ++ci) {
                const float* src = y.ptr() + ((bi * c + ci) * t + ti) * hw;
                float* dst = x.ptr() + ((bi * t + ti) * c + ci) * hw;
                std::copy(src, src + hw, dst);
            }
    return x;
}

Tensor chw_to_tokens(const Tensor& x) {
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor tk({n * hw, c});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* src = x.ptr() + (i * c + ch) * hw;
            float* dst = tk.ptr() + i * hw * c + ch;
            for (int64_t p = 0; p < hw; ++p) dst[p * c] = src[p];
        }
    return tk;
}

Tensor tokens_to_chw(const Tensor& tk, int64_t c, int64_t h, int64_t w) {
    const int64_t hw = h * w, n = tk.dim(0) / hw;
    Tensor x({n, c, h, w});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* src = tk.ptr() + i * hw * c + ch;
            float* dst = x.ptr() + (i * c + ch) * hw;
            for (int64_t p = 0; p < hw; ++p) dst[p] = src[p * c];
        }
    return x;
}

Tensor time_tokens(const Tensor& x, int64_t b, int64_t t) {
    const int64_t c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor tk({b * hw * t, c});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ti = 0; ti < t; ++ti)
            for (int64_t ch = 0; ch < c; ++ch) {
                const float* src = x.ptr() + ((bi * t + ti) * c + ch) * hw;
                for (int64_t p = 0; p < hw; ++p)
                    tk[((bi * hw + p) * t + ti) * c + ch] = src[p];
            }
    return tk;
}

Tensor time_tokens_inv(const Tensor& tk, int64_t b, int64_t t, int64_t c, int64_t h, int64_t w) {
    const int64_t hw = h * w;
    Tensor x({b * t, c, h, w});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ti = 0; ti < t; ++ti)
            for (int64_t ch = 0; ch < c; ++ch) {
                float* dst = x.ptr() + ((bi * t + ti) * c + ch) * hw;
                for (int64_t p = 0; p < hw; ++p)
                    dst[p] = tk[((bi * hw + p) * t + ti) * c + ch];
            }
    return x;
}

Tensor sinusoid_features(double value, int dim, double max_period) {
    if (dim % 2 != 0) throw runtime_failure("sinusoid_features: dim must be even");
    const int half = dim / 2;
    Tensor out({dim});
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(max_period) * static_cast<double>(i) / half);
        out[i] = static_cast<float>(std::cos(value * freq));
        out[half + i] = static_cast<float>(std::sin(value * freq));
    }
    return out;
}

}  // namespace moca::nn
