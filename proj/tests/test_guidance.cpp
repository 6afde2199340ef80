#include <cmath>
#include <vector>

#include "doctest.h"
#include "moca/guidance.hpp"

using namespace moca;

namespace {

Tensor randn(Rng& rng, std::vector<int64_t> shape) {
    Tensor t(std::move(shape));
    for (auto& x : t.data) x = rng.normal_f();
    return t;
}

DenoiserConfig sampler_config() {
    DenoiserConfig cfg;
    cfg.latent_channels = 6;
    cfg.base_width = 8;
    cfg.feat_width = 8;
    cfg.emb_width = 16;
    cfg.text_width = 6;
    cfg.max_frames = 4;
    cfg.max_text_len = 12;
    cfg.num_train_steps = 40;
    cfg.groups = 4;
    return cfg;
}

void jitter_params(Denoiser& den, uint64_t seed) {
    Rng rng(seed);
    for (auto& pr : den.params())
        for (auto& x : pr.p->v.data) x += 0.08f * rng.normal_f();
}

ConditioningBundle full_bundle(const Denoiser& den, Rng& rng) {
    ConditioningBundle cond;
    cond.has_text = true;
    cond.text_ids = den.tokenize("a green circle moving up on a black background");
    cond.has_image = true;
    cond.image = randn(rng, {6, 4, 4});
    cond.has_motion = true;
    cond.motion = randn(rng, {3, 6, 4, 4});
    cond.magnitude = 1.5;
    return cond;
}

}  // namespace

TEST_CASE("guidance: scalar-stub substitution gives 6 exactly") {
    Tensor u000({1}), u00i({1}), u0ti({1}), umti({1});
    u000[0] = 0.0f;
    u00i[0] = 1.0f;
    u0ti[0] = 3.0f;
    umti[0] = 7.0f;
    GuidanceScales s{2.0, 1.0, 0.5};
    Tensor out = compose_guidance(u000, u00i, u0ti, umti, s);
    CHECK(out[0] == 6.0f);
}

TEST_CASE("guidance: telescoping limits") {
    Rng rng(7);
    Tensor u000 = randn(rng, {2, 3, 4}), u00i = randn(rng, {2, 3, 4});
    Tensor u0ti = randn(rng, {2, 3, 4}), umti = randn(rng, {2, 3, 4});
    Tensor ones = compose_guidance(u000, u00i, u0ti, umti, {1.0, 1.0, 1.0});
    Tensor zeros = compose_guidance(u000, u00i, u0ti, umti, {0.0, 0.0, 0.0});
    double worst1 = 0.0, worst0 = 0.0;
    for (int64_t i = 0; i < ones.numel(); ++i) {
        worst1 = std::max(worst1, std::abs(double(ones[i]) - umti[i]));
        worst0 = std::max(worst0, std::abs(double(zeros[i]) - u000[i]));
    }
    CHECK(worst1 < 1e-6);
    CHECK(worst0 < 1e-6);
}

TEST_CASE("guidance: composition is affine with telescoping coefficients") {
    Rng rng(8);
    GuidanceScales s{1.7, 0.6, 2.3};
    Tensor u000 = randn(rng, {64}), u00i = randn(rng, {64});
    Tensor u0ti = randn(rng, {64}), umti = randn(rng, {64});
    Tensor out = compose_guidance(u000, u00i, u0ti, umti, s);
    for (int64_t i = 0; i < 64; ++i) {
        double want = (1.0 - s.s_image) * u000[i] + (s.s_image - s.s_text) * u00i[i] +
                      (s.s_text - s.s_motion) * u0ti[i] + s.s_motion * umti[i];
        CHECK(std::abs(out[i] - want) < 1e-5);
    }
}

TEST_CASE("guidance: shape mismatch and negative scales rejected") {
    Tensor a({4}), b({5});
    CHECK_THROWS_AS((void)compose_guidance(a, a, a, b, {1, 1, 1}), runtime_failure);
    GuidanceScales bad{1.0, -0.5, 1.0};
    CHECK_THROWS_AS(bad.validate(), usage_error);
}

TEST_CASE("guidance: dropout marginals match the paper's combined policy") {
    DropoutPolicy policy;
    policy.validate();
    Rng rng(123);
    const int n = 200000;
    int m_null = 0, t_null = 0, i_null = 0, all_null = 0, none = 0;
    for (int k = 0; k < n; ++k) {
        DropMask m = sample_dropout_mask(policy, rng);
        m_null += m.drop_motion;
        t_null += m.drop_text;
        i_null += m.drop_image;
        all_null += (m.drop_motion && m.drop_text && m.drop_image);
        none += (!m.drop_motion && !m.drop_text && !m.drop_image);
    }
    CHECK(std::abs(m_null / double(n) - 0.5) < 0.01);
    CHECK(std::abs(t_null / double(n) - 0.3) < 0.01);
    CHECK(std::abs(i_null / double(n) - 0.3) < 0.01);
    CHECK(std::abs(all_null / double(n) - 0.1 * 2.0 / 7.0) < 0.005);
    CHECK(std::abs(none / double(n) - 0.4 * 5.0 / 7.0) < 0.01);
}

TEST_CASE("guidance: invalid dropout policies rejected") {
    DropoutPolicy p;
    p.p_combo = 0.2;  // 6 * 0.2 > 1
    CHECK_THROWS_AS(p.validate(), usage_error);
    p = DropoutPolicy{};
    p.p_extra_motion = 1.5;
    CHECK_THROWS_AS(p.validate(), usage_error);
}

TEST_CASE("guidance: apply_dropout clears payloads with the flags") {
    Rng rng(3);
    Denoiser den(sampler_config(), 1);
    ConditioningBundle full = full_bundle(den, rng);
    DropMask m;
    m.drop_text = m.drop_motion = true;
    ConditioningBundle out = apply_dropout(full, m);
    CHECK(!out.has_text);
    CHECK(out.text_ids.empty());
    CHECK(!out.has_motion);
    CHECK(out.motion.numel() == 0);
    CHECK(out.magnitude == 0.0);
    CHECK(out.has_image);
    CHECK(out.image.data == full.image.data);
}

TEST_CASE("guidance: cfg_sample is deterministic under seed") {
    Denoiser den(sampler_config(), 5);
    jitter_params(den, 17);
    NoiseSchedule sched = make_schedule(40);
    SamplerConfig scfg;
    scfg.num_inference_steps = 8;
    Rng data_rng(2);
    ConditioningBundle cond = full_bundle(den, data_rng);

    Rng r1(99), r2(99);
    SampleStats st;
    LatentVideo a = cfg_sample(den, sched, scfg, {3, 6, 4, 4}, cond, {1.5, 2.0, 1.0}, r1, &st);
    LatentVideo b = cfg_sample(den, sched, scfg, {3, 6, 4, 4}, cond, {1.5, 2.0, 1.0}, r2);
    CHECK(a.latents.data == b.latents.data);
    CHECK(st.steps == 8);
    CHECK(st.denoiser_calls == 32);
    bool finite = true;
    for (float x : a.latents.data) finite = finite && std::isfinite(x);
    CHECK(finite);
}

TEST_CASE("guidance: s_motion=0 skips the motion branch and ignores motion inputs") {
    Denoiser den(sampler_config(), 5);
    jitter_params(den, 17);
    NoiseSchedule sched = make_schedule(40);
    SamplerConfig scfg;
    scfg.num_inference_steps = 6;
    Rng data_rng(2);
    ConditioningBundle cond = full_bundle(den, data_rng);
    ConditioningBundle other = cond;
    for (auto& x : other.motion.data) x += 3.0f;
    other.magnitude = 0.01;

    GuidanceScales s{1.5, 2.0, 0.0};
    Rng r1(4), r2(4);
    SampleStats st;
    LatentVideo a = cfg_sample(den, sched, scfg, {3, 6, 4, 4}, cond, s, r1, &st);
    LatentVideo b = cfg_sample(den, sched, scfg, {3, 6, 4, 4}, other, s, r2);
    CHECK(a.latents.data == b.latents.data);
    CHECK(st.denoiser_calls == 18);  // three calls per step
}

TEST_CASE("guidance: unit scales collapse to the fully-conditioned trajectory") {
    Denoiser den(sampler_config(), 5);
    jitter_params(den, 17);
    NoiseSchedule sched = make_schedule(40);
    SamplerConfig scfg;
    scfg.num_inference_steps = 6;
    Rng data_rng(2);
    ConditioningBundle cond = full_bundle(den, data_rng);

    Rng r1(11);
    LatentVideo guided = cfg_sample(den, sched, scfg, {3, 6, 4, 4}, cond, {1.0, 1.0, 1.0}, r1);

    // reference loop: a single fully-conditioned denoiser call per step
    Rng r2(11);
    LatentVideo z;
    z.latents = Tensor({3, 6, 4, 4});
    for (auto& x : z.latents.data) x = r2.normal_f();
    auto ts = inference_timesteps(40, 6);
    for (size_t i = 0; i < ts.size(); ++i) {
        int t = ts[i], t_prev = (i + 1 < ts.size()) ? ts[i + 1] : 0;
        Tensor v = den.denoise(z, t, cond);
        z = ddim_step(z, v, t, t_prev, sched, scfg, r2);
    }
    double worst = 0.0;
    for (int64_t i = 0; i < z.latents.numel(); ++i)
        worst = std::max(worst, std::abs(double(guided.latents[i]) - z.latents[i]));
    CHECK(worst < 1e-5);
}
