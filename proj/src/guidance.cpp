#include "moca/guidance.hpp"

#include <atomic>

#include "moca/core/error.hpp"
#include "moca/kernels/kernels.hpp"

namespace moca {

namespace {
std::atomic<uint64_t> g_compose_calls{0};
}

void GuidanceScales::validate() const {
    if (s_image < 0.0 || s_text < 0.0 || s_motion < 0.0)
        throw usage_error("guidance scales must be non-negative");
}

void DropoutPolicy::validate() const {
    if (p_combo < 0.0 || 6.0 * p_combo > 1.0)
        throw usage_error("dropout: p_combo must satisfy 0 <= 6*p_combo <= 1");
    if (p_extra_motion < 0.0 || p_extra_motion > 1.0)
        throw usage_error("dropout: p_extra_motion must lie in [0,1]");
}

DropMask sample_dropout_mask(const DropoutPolicy& policy, Rng& rng) {
    DropMask m;
    const double keep = 1.0 - 6.0 * policy.p_combo;
    const double u = rng.uniform();
    if (u >= keep && policy.p_combo > 0.0) {
        int k = static_cast<int>((u - keep) / policy.p_combo);
        if (k > 5) k = 5;
        switch (k) {
            case 0: m.drop_image = true; break;
            case 1: m.drop_text = true; break;
            case 2: m.drop_motion = true; break;
            case 3: m.drop_image = m.drop_text = true; break;
            case 4: m.drop_image = m.drop_motion = true; break;
            case 5: m.drop_text = m.drop_motion = true; break;
        }
    }
    if (rng.uniform() < policy.p_extra_motion) m.drop_motion = true;
    return m;
}

ConditioningBundle apply_dropout(const ConditioningBundle& full, const DropMask& mask) {
    ConditioningBundle out = full;
    if (mask.drop_image) {
        out.has_image = false;
        out.image = Tensor();
    }
    if (mask.drop_text) {
        out.has_text = false;
        out.text_ids.clear();
    }
    if (mask.drop_motion) {
        out.has_motion = false;
        out.motion = Tensor();
        out.magnitude = 0.0;
    }
    return out;
}

Tensor compose_guidance(const Tensor& u000, const Tensor& u00i, const Tensor& u0ti,
                        const Tensor& umti, const GuidanceScales& s) {
    check_same_shape(u000, u00i, "compose_guidance");
    check_same_shape(u000, u0ti, "compose_guidance");
    check_same_shape(u000, umti, "compose_guidance");
    g_compose_calls.fetch_add(1, std::memory_order_relaxed);
    Tensor out(u000.shape);
    kernels::active().guidance_combine(out.numel(), u000.ptr(), u00i.ptr(), u0ti.ptr(), umti.ptr(),
                                       static_cast<float>(s.s_image), static_cast<float>(s.s_text),
                                       static_cast<float>(s.s_motion), out.ptr());
    return out;
}

uint64_t compose_guidance_calls() { return g_compose_calls.load(std::memory_order_relaxed); }

LatentVideo cfg_sample(const Denoiser& den, const NoiseSchedule& sched, const SamplerConfig& scfg,
                       const std::vector<int64_t>& shape, const ConditioningBundle& cond,
                       const GuidanceScales& scales, Rng& rng, SampleStats* stats) {
    scfg.validate(sched.num_train_steps);
    scales.validate();
    if (shape.size() != 4)
        throw usage_error("cfg_sample: latent shape must be [T,C,H,W]");

    // The four conditioning stages of the guidance formula.
    const ConditioningBundle b000;
    ConditioningBundle b00i;
    b00i.has_image = cond.has_image;
    b00i.image = cond.image;
    ConditioningBundle b0ti = b00i;
    b0ti.has_text = cond.has_text;
    b0ti.text_ids = cond.text_ids;
    ConditioningBundle bmti = b0ti;
    bmti.has_motion = cond.has_motion;
    bmti.motion = cond.motion;
    bmti.magnitude = cond.magnitude;
    const bool motion_active = scales.s_motion != 0.0;

    LatentVideo z;
    z.latents = Tensor(shape);
    for (auto& x : z.latents.data) x = rng.normal_f();

    const std::vector<int> ts = inference_timesteps(sched.num_train_steps, scfg.num_inference_steps);
    for (size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_prev = (i + 1 < ts.size()) ? ts[i + 1] : 0;
        Tensor u000 = den.denoise(z, t, b000);
        Tensor u00i = den.denoise(z, t, b00i);
        Tensor u0ti = den.denoise(z, t, b0ti);
        Tensor umti = motion_active ? den.denoise(z, t, bmti) : u0ti;
        Tensor v = compose_guidance(u000, u00i, u0ti, umti, scales);
        z = ddim_step(z, v, t, t_prev, sched, scfg, rng);
        if (stats) {
            stats->steps += 1;
            stats->denoiser_calls += motion_active ? 4 : 3;
        }
    }
    return z;
}

}  // namespace moca
