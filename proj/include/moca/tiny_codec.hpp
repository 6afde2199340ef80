#pragma once

#include "moca/codec.hpp"
#include "moca/nn/layers.hpp"

namespace moca {

// Learned codec variant: space-to-depth followed by a per-position linear
// bottleneck, trained by reconstruction. With latent_channels = 3*factor^2
// the identity map is representable, so a short run reaches near-exact
// roundtrips on the synthetic palette.
class TinyCodec {
  public:
    TinyCodec(CodecConfig cfg, uint64_t seed);  // cfg.kind must be learned_tiny

    const CodecConfig& config() const { return cfg_; }

    LatentVideo encode(const VideoTensor& video) const;
    VideoTensor decode(const LatentVideo& latent) const;
    Tensor encode_frame(const Tensor& frame_3hw) const;
    Tensor decode_frame(const Tensor& latent_chw) const;

    // One Adam step on reconstruction MSE over a frame batch [N, 3, H, W] in
    // [0,1]; returns the loss (measured in the [-1,1] working range).
    double train_step(const Tensor& frames, double lr);

    // Mean absolute pixel error of decode(encode(video)).
    double roundtrip_mae(const VideoTensor& video) const;

  private:
    Tensor patchify(const Tensor& frame) const;  // [3,H,W] -> [H'*W', 3f^2]

    CodecConfig cfg_;
    nn::P enc_w_, enc_b_, dec_w_, dec_b_;
    Tensor m_[4], v_[4];  // Adam moments, order: enc_w, enc_b, dec_w, dec_b
    int64_t step_ = 0;
};

}  // namespace moca
