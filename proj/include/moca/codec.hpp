#pragma once

#include <string>

#include "moca/core/tensor.hpp"

namespace moca {

// Pixel-space clip: frames in [0,1], shape T x 3 x H x W.
struct VideoTensor {
    Tensor frames;
    double fps = 4.0;

    int64_t t() const { return frames.dim(0); }
    int64_t h() const { return frames.dim(2); }
    int64_t w() const { return frames.dim(3); }
};

// Per-frame latent encoding, shape T x C x H' x W'.
struct LatentVideo {
    Tensor latents;

    int64_t t() const { return latents.dim(0); }
    int64_t c() const { return latents.dim(1); }
    int64_t h() const { return latents.dim(2); }
    int64_t w() const { return latents.dim(3); }
};

enum class CodecKind { identity_patch, learned_tiny };

struct CodecConfig {
    CodecKind kind = CodecKind::identity_patch;
    int factor = 4;
    int latent_channels = 48;  // identity-patch requires 3 * factor^2

    void validate() const;
};

// Frame-wise encode to latent space. identity-patch is an exact
// space-to-channel rearrangement of [0,1] pixels shifted to [-1,1].
LatentVideo encode_video(const VideoTensor& video, const CodecConfig& cfg);

// Inverse map; output clamped to [0,1]. Exact inverse of encode for
// identity-patch.
VideoTensor decode_video(const LatentVideo& latent, const CodecConfig& cfg);

// Single-frame variants (first-frame conditioning path).
Tensor encode_frame(const Tensor& frame_3hw, const CodecConfig& cfg);
Tensor decode_frame(const Tensor& latent_chw, const CodecConfig& cfg);

namespace io {

// Clip on disk: a directory of frame_0000.png ... plus meta.json.
void write_video_dir(const std::string& dir, const VideoTensor& video);
VideoTensor read_video_dir(const std::string& dir);

}  // namespace io

}  // namespace moca
