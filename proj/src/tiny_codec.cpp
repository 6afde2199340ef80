#include "moca/tiny_codec.hpp"

#include <algorithm>
#include <cmath>

#include "moca/kernels/kernels.hpp"

namespace moca {

TinyCodec::TinyCodec(CodecConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.kind != CodecKind::learned_tiny) {
        throw usage_error("tiny codec: config kind must be learned-tiny");
    }
    const int64_t d = 3LL * cfg_.factor * cfg_.factor;
    const int64_t c = cfg_.latent_channels;
    Rng rng(seed);
    enc_w_.init_normal(rng, {c, d}, 1.0 / std::sqrt(static_cast<double>(d)));
    enc_b_.init_zero({c});
    dec_w_.init_normal(rng, {d, c}, 1.0 / std::sqrt(static_cast<double>(c)));
    dec_b_.init_zero({d});
    nn::P* ps[4] = {&enc_w_, &enc_b_, &dec_w_, &dec_b_};
    for (int i = 0; i < 4; ++i) {
        m_[i] = Tensor(ps[i]->v.shape);
        v_[i] = Tensor(ps[i]->v.shape);
    }
}

Tensor TinyCodec::patchify(const Tensor& frame) const {
    const int f = cfg_.factor;
    const int64_t H = frame.dim(1), W = frame.dim(2);
    if (frame.ndim() != 3 || frame.dim(0) != 3 || H % f != 0 || W % f != 0) {
        throw runtime_failure("tiny codec: frame shape " + frame.shape_str() +
                              " incompatible with factor " + std::to_string(f));
    }
    const int64_t Hh = H / f, Wh = W / f, d = 3LL * f * f;
    Tensor rows({Hh * Wh, d});
    for (int64_t c = 0; c < 3; ++c) {
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                int64_t p = (y / f) * Wh + x / f;
                int64_t cc = (c * f + y % f) * f + x % f;
                rows[p * d + cc] = 2.0f * frame[(c * H + y) * W + x] - 1.0f;
            }
        }
    }
    return rows;
}

Tensor TinyCodec::encode_frame(const Tensor& frame_3hw) const {
    const int f = cfg_.factor;
    const int64_t Hh = frame_3hw.dim(1) / f, Wh = frame_3hw.dim(2) / f;
    Tensor lat = nn::linear_fwd(patchify(frame_3hw), enc_w_, enc_b_);  // [P, C]
    Tensor out({cfg_.latent_channels, Hh, Wh});
    for (int64_t p = 0; p < Hh * Wh; ++p)
        for (int64_t c = 0; c < cfg_.latent_channels; ++c)
            out[(c * Hh + p / Wh) * Wh + p % Wh] = lat[p * cfg_.latent_channels + c];
    return out;
}

Tensor TinyCodec::decode_frame(const Tensor& latent_chw) const {
    if (latent_chw.ndim() != 3 || latent_chw.dim(0) != cfg_.latent_channels) {
        throw runtime_failure("tiny codec: latent has shape " + latent_chw.shape_str() +
                              ", expected " + std::to_string(cfg_.latent_channels) + " channels");
    }
    const int f = cfg_.factor;
    const int64_t Hh = latent_chw.dim(1), Wh = latent_chw.dim(2), d = 3LL * f * f;
    Tensor rows({Hh * Wh, cfg_.latent_channels});
    for (int64_t p = 0; p < Hh * Wh; ++p)
        for (int64_t c = 0; c < cfg_.latent_channels; ++c)
            rows[p * cfg_.latent_channels + c] = latent_chw[(c * Hh + p / Wh) * Wh + p % Wh];
    Tensor rec = nn::linear_fwd(rows, dec_w_, dec_b_);  // [P, d]
    Tensor out({3, Hh * f, Wh * f});
    for (int64_t c = 0; c < 3; ++c) {
        for (int64_t y = 0; y < Hh * f; ++y) {
            for (int64_t x = 0; x < Wh * f; ++x) {
                int64_t p = (y / f) * Wh + x / f;
                int64_t cc = (c * f + y % f) * f + x % f;
                out[(c * Hh * f + y) * (Wh * f) + x] =
                    std::clamp(0.5f * (rec[p * d + cc] + 1.0f), 0.0f, 1.0f);
            }
        }
    }
    return out;
}

LatentVideo TinyCodec::encode(const VideoTensor& video) const {
    const int64_t T = video.t();
    LatentVideo out;
    out.latents = Tensor({T, cfg_.latent_channels, video.h() / cfg_.factor, video.w() / cfg_.factor});
    Tensor frame({3, video.h(), video.w()});
    for (int64_t t = 0; t < T; ++t) {
        std::copy_n(video.frames.ptr() + t * frame.numel(), frame.numel(), frame.ptr());
        Tensor lat = encode_frame(frame);
        std::copy_n(lat.ptr(), lat.numel(), out.latents.ptr() + t * lat.numel());
    }
    return out;
}

VideoTensor TinyCodec::decode(const LatentVideo& latent) const {
    const int64_t T = latent.t();
    VideoTensor out;
    out.frames = Tensor({T, 3, latent.h() * cfg_.factor, latent.w() * cfg_.factor});
    Tensor lat({latent.c(), latent.h(), latent.w()});
    for (int64_t t = 0; t < T; ++t) {
        std::copy_n(latent.latents.ptr() + t * lat.numel(), lat.numel(), lat.ptr());
        Tensor frame = decode_frame(lat);
        std::copy_n(frame.ptr(), frame.numel(), out.frames.ptr() + t * frame.numel());
    }
    return out;
}

double TinyCodec::train_step(const Tensor& frames, double lr) {
    if (frames.ndim() != 4 || frames.dim(1) != 3) {
        throw usage_error("tiny codec: train batch must be [N,3,H,W], got " + frames.shape_str());
    }
    if (lr <= 0) throw usage_error("tiny codec: lr must be positive");
    const int64_t N = frames.dim(0);
    const int f = cfg_.factor;
    const int64_t P = (frames.dim(2) / f) * (frames.dim(3) / f), d = 3LL * f * f;
    Tensor x({N * P, d});
    Tensor frame({3, frames.dim(2), frames.dim(3)});
    for (int64_t n = 0; n < N; ++n) {
        std::copy_n(frames.ptr() + n * frame.numel(), frame.numel(), frame.ptr());
        Tensor rows = patchify(frame);
        std::copy_n(rows.ptr(), rows.numel(), x.ptr() + n * rows.numel());
    }
    Tensor lat = nn::linear_fwd(x, enc_w_, enc_b_);
    Tensor rec = nn::linear_fwd(lat, dec_w_, dec_b_);

    double loss = 0.0;
    Tensor drec(rec.shape);
    const double inv = 1.0 / static_cast<double>(rec.numel());
    for (int64_t i = 0; i < rec.numel(); ++i) {
        double e = static_cast<double>(rec[i]) - static_cast<double>(x[i]);
        loss += e * e;
        drec[i] = static_cast<float>(2.0 * e * inv);
    }
    loss *= inv;
    if (!std::isfinite(loss)) throw runtime_failure("tiny codec: non-finite loss");

    nn::P* ps[4] = {&enc_w_, &enc_b_, &dec_w_, &dec_b_};
    for (auto* p : ps) p->zero_grad();
    Tensor dlat = nn::linear_bwd(lat, dec_w_, dec_b_, drec);
    nn::linear_bwd(x, enc_w_, enc_b_, dlat);

    step_ += 1;
    const auto& K = kernels::active();
    float step_size = static_cast<float>(lr / (1.0 - std::pow(0.9, static_cast<double>(step_))));
    float inv_bc2 = static_cast<float>(1.0 / (1.0 - std::pow(0.999, static_cast<double>(step_))));
    for (int i = 0; i < 4; ++i) {
        K.adam_step(ps[i]->v.numel(), ps[i]->v.ptr(), m_[i].ptr(), v_[i].ptr(), ps[i]->g.ptr(),
                    0.9f, 0.999f, step_size, inv_bc2, 1e-8f);
    }
    return loss;
}

double TinyCodec::roundtrip_mae(const VideoTensor& video) const {
    VideoTensor rec = decode(encode(video));
    double sum = 0.0;
    for (int64_t i = 0; i < video.frames.numel(); ++i) {
        sum += std::abs(static_cast<double>(rec.frames[i]) - static_cast<double>(video.frames[i]));
    }
    return sum / static_cast<double>(video.frames.numel());
}

}  // namespace moca
