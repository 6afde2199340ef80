#pragma once

#include <memory>
#include <string>
#include <vector>

#include "moca/codec.hpp"
#include "moca/nn/layers.hpp"

namespace moca {

// Words the toy text encoder understands: the closed prompt grammar of the
// synthetic scenes.
std::vector<std::string> default_vocab();

struct DenoiserConfig {
    int latent_channels = 48;  // C; first conv consumes 3C (noisy|image|motion)
    int base_width = 24;       // channels at full latent resolution, 2x at half
    int temporal_depth = 1;    // 0 ablates every temporal mixing layer
    int feat_width = 96;       // sinusoid width for timestep/magnitude
    int emb_width = 192;       // conditioning embedding fed to the blocks
    int text_width = 48;
    int max_frames = 8;
    int max_text_len = 16;
    int num_train_steps = 1000;
    int groups = 8;
    std::vector<std::string> vocab = default_vocab();

    void validate() const;
};

// Per-sample conditioning; `has_*` flags are authoritative — when a flag is
// false the paired payload is ignored entirely (null means null).
struct ConditioningBundle {
    bool has_text = false;
    std::vector<int> text_ids;
    bool has_image = false;
    Tensor image;  // [C, H', W']
    bool has_motion = false;
    Tensor motion;  // [T, C, H', W']
    double magnitude = 0.0;
};

class Denoiser {
  public:
    Denoiser(DenoiserConfig cfg, uint64_t init_seed);
    ~Denoiser();
    Denoiser(Denoiser&&) noexcept;
    Denoiser& operator=(Denoiser&&) noexcept;

    const DenoiserConfig& config() const { return cfg_; }

    // v-prediction for one clip; pure function of (inputs, params).
    Tensor denoise(const LatentVideo& z, int t, const ConditioningBundle& cond) const;

    struct Sample {
        Tensor z;  // [T, C, H', W']
        int t = 0;
        ConditioningBundle cond;
    };

    // Opaque activation store filled by forward, consumed by backward.
    struct Cache {
        Cache();
        ~Cache();
        Cache(Cache&&) noexcept;
        struct Body;
        std::unique_ptr<Body> body;
    };

    // Batched forward; output rows are the per-sample v-predictions stacked
    // as [B*T, C, H', W']. Pass a cache to enable backward.
    Tensor forward(const std::vector<Sample>& batch, Cache* cache) const;
    // Accumulates parameter gradients for d(loss)/d(output) = dout.
    void backward(const Tensor& dout, const std::vector<Sample>& batch, Cache& cache);

    std::vector<int> tokenize(const std::string& prompt) const;
    // Learned token+position embeddings, one row per token; "" gives the
    // null-text sequence (a single learned row).
    Tensor embed_text(const std::string& prompt) const;
    // Projected sinusoidal magnitude embedding (the vector added to the
    // timestep features); null motion swaps in a learned row instead.
    Tensor embed_magnitude(double m, bool is_null) const;

    nn::ParamMap params();
    int64_t param_count();

    void zero_grads();

  private:
    DenoiserConfig cfg_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace moca
