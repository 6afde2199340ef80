#pragma once

#include <string>
#include <vector>

#include "moca/core/rng.hpp"
#include "moca/core/tensor.hpp"

// Hand-written layer primitives: every op has an explicit backward that
// consumes the same inputs the forward saw. No autograd graph; callers keep
// the activations they need and mirror the forward in reverse.

namespace moca::nn {

// Parameter tensor paired with its gradient accumulator.
struct P {
    Tensor v, g;

    void init_normal(Rng& rng, std::vector<int64_t> shape, double stdev);
    void init_zero(std::vector<int64_t> shape);
    void init_const(std::vector<int64_t> shape, float value);
    void zero_grad() { g.fill(0.0f); }
};

struct ParamRef {
    std::string name;
    P* p;
};
using ParamMap = std::vector<ParamRef>;

inline void collect(ParamMap& out, const std::string& name, P& p) { out.push_back({name, &p}); }

// y = x w^T + b; x [n, in], w [out, in], b [out]
Tensor linear_fwd(const Tensor& x, const P& w, const P& b);
// accumulates into w.g / b.g, returns dx
Tensor linear_bwd(const Tensor& x, P& w, P& b, const Tensor& dy);

// conv2d, x [n, cin, h, w], w [cout, cin, kh, kw], stride (sh, sw), zero pad
// (ph, pw)
Tensor conv2d_fwd(const Tensor& x, const P& w, const P& b, int sh, int sw, int ph, int pw);
Tensor conv2d_bwd(const Tensor& x, P& w, P& b, const Tensor& dy, int sh, int sw, int ph, int pw);

struct GnCache {
    Tensor mean, invstd;  // [n, groups]
};
// GroupNorm over channel groups; x [n, c, h, w]
Tensor groupnorm_fwd(const Tensor& x, const P& gamma, const P& beta, int groups, GnCache& cache);
Tensor groupnorm_bwd(const Tensor& x, const P& gamma, P& dgamma_into, P& dbeta_into,
                     const Tensor& dy, int groups, const GnCache& cache);

Tensor silu_fwd(const Tensor& x);
Tensor silu_bwd(const Tensor& x, const Tensor& dy);

struct AttnCache {
    Tensor probs;  // [nq, nk]
};
// Single-head scaled dot-product attention; q [nq, d], k/v [nk, d].
Tensor attention_fwd(const Tensor& q, const Tensor& k, const Tensor& v, AttnCache& cache);
void attention_bwd(const Tensor& q, const Tensor& k, const Tensor& v, const AttnCache& cache,
                   const Tensor& dout, Tensor& dq, Tensor& dk, Tensor& dv);

// nearest-neighbor 2x upsample, [n, c, h, w] -> [n, c, 2h, 2w]
Tensor upsample2x_fwd(const Tensor& x);
Tensor upsample2x_bwd(const Tensor& dy);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int64_t ca, Tensor& da, Tensor& db);

// [b*t, c, h, w] -> [b, c, t, h*w]; lets the temporal mixers run as conv2d /
// per-position attention over the t axis.
Tensor to_time_major(const Tensor& x, int64_t b, int64_t t);
Tensor from_time_major(const Tensor& y, int64_t h, int64_t w);

// [n, c, h, w] -> token rows [n*h*w, c] in (n, p) order; spatial/cross
// attention consumes contiguous row slices per image (or per sample).
Tensor chw_to_tokens(const Tensor& x);
Tensor tokens_to_chw(const Tensor& tk, int64_t c, int64_t h, int64_t w);

// [b*t, c, h, w] -> token rows [b*h*w*t, c] in (b, p, t) order, so each
// temporal attention window is a contiguous [t, c] slice.
Tensor time_tokens(const Tensor& x, int64_t b, int64_t t);
Tensor time_tokens_inv(const Tensor& tk, int64_t b, int64_t t, int64_t c, int64_t h, int64_t w);

// Transformer-style featurization of a scalar; index 0..half-1 are cos terms
// (all 1 at value 0), half..dim-1 the sin terms.
Tensor sinusoid_features(double value, int dim, double max_period = 10000.0);

}  // namespace moca::nn
