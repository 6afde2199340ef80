#pragma once

#include <cstdint>
#include <vector>

#include "moca/denoiser.hpp"
#include "moca/schedule.hpp"

namespace moca {

struct GuidanceScales {
    double s_image = 1.0;
    double s_text = 1.0;
    double s_motion = 1.0;

    void validate() const;
};

// The paper's two dropout statements combined: each nonempty proper subset of
// {image, text, motion} is nulled with probability p_combo; an independent
// extra motion drop of p_extra_motion lifts the motion-null marginal from
// 0.3 to 0.5.
struct DropoutPolicy {
    double p_combo = 0.10;
    double p_extra_motion = 2.0 / 7.0;

    void validate() const;
};

struct DropMask {
    bool drop_image = false;
    bool drop_text = false;
    bool drop_motion = false;
};

DropMask sample_dropout_mask(const DropoutPolicy& policy, Rng& rng);

// Returns the bundle with masked slots nulled (flags down, payloads cleared).
ConditioningBundle apply_dropout(const ConditioningBundle& full, const DropMask& mask);

// u000 + s_I (u00i - u000) + s_T (u0ti - u00i) + s_M (umti - u0ti)
Tensor compose_guidance(const Tensor& u000, const Tensor& u00i, const Tensor& u0ti,
                        const Tensor& umti, const GuidanceScales& s);

// Process-wide invocation count; lets tests pin down which paths reach the
// guidance composition (training must not).
uint64_t compose_guidance_calls();

struct SampleStats {
    int64_t steps = 0;
    int64_t denoiser_calls = 0;
};

// Guided DDIM sampling loop: starts from pure noise, runs the inference
// timesteps, calls the denoiser with the four conditioning stages per step
// (three when s_motion == 0 — the fourth term cancels) and composes them.
LatentVideo cfg_sample(const Denoiser& den, const NoiseSchedule& sched, const SamplerConfig& scfg,
                       const std::vector<int64_t>& shape, const ConditioningBundle& cond,
                       const GuidanceScales& scales, Rng& rng, SampleStats* stats = nullptr);

}  // namespace moca
