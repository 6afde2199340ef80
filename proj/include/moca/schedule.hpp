#pragma once

#include <cmath>
#include <vector>

#include "moca/codec.hpp"
#include "moca/core/rng.hpp"
#include "moca/core/tensor.hpp"

namespace moca {

enum class ScheduleBase { linear, cosine };

// Forward-process schedule with zero terminal SNR. alpha_bar has length N+1,
// alpha_bar[0] = 1 (empty product) and alpha_bar[N] = 0 exactly, so the last
// training step is pure noise and sampling can start from a Gaussian.
struct NoiseSchedule {
    int num_train_steps = 0;
    std::vector<double> alpha_bar;

    double alpha(int t) const { return std::sqrt(alpha_bar[static_cast<size_t>(t)]); }
    double sigma(int t) const { return std::sqrt(1.0 - alpha_bar[static_cast<size_t>(t)]); }
    double snr(int t) const {
        double ab = alpha_bar[static_cast<size_t>(t)];
        return ab / (1.0 - ab);
    }
    void check_t(int t) const;
};

struct SamplerConfig {
    int num_inference_steps = 64;
    double eta = 0.0;

    void validate(int num_train_steps) const;
};

// Base curve (linear-beta or cosine alpha_bar), then an affine rescale of
// sqrt(alpha_bar) pinning sqrt(alpha_bar[N]) to 0 with sqrt(alpha_bar[1])
// preserved.
NoiseSchedule make_schedule(int num_train_steps, ScheduleBase base = ScheduleBase::linear);

// z_t = alpha_t * x0 + sigma_t * eps
LatentVideo add_noise(const LatentVideo& x0, const Tensor& eps, int t, const NoiseSchedule& sched);

// v = alpha_t * eps - sigma_t * x0
Tensor v_target(const LatentVideo& x0, const Tensor& eps, int t, const NoiseSchedule& sched);

// x0_hat = alpha_t * z_t - sigma_t * v
LatentVideo predict_x0_from_v(const LatentVideo& z_t, const Tensor& v, int t, const NoiseSchedule& sched);

// eps_hat = sigma_t * z_t + alpha_t * v
Tensor predict_eps_from_v(const LatentVideo& z_t, const Tensor& v, int t, const NoiseSchedule& sched);

// One DDIM update t -> t_prev. Deterministic when eta = 0; rng is only
// touched when eta > 0.
LatentVideo ddim_step(const LatentVideo& z_t, const Tensor& v_pred, int t, int t_prev,
                      const NoiseSchedule& sched, const SamplerConfig& cfg, Rng& rng);

// Descending inference timesteps: first entry is N, a final step to 0 is
// implied by the caller pairing entries with t_prev (last pair goes to 0).
std::vector<int> inference_timesteps(int num_train_steps, int num_inference_steps);

}  // namespace moca
