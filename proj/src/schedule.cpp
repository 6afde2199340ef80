#include "moca/schedule.hpp"

#include <cmath>
#include <string>

#include "moca/core/error.hpp"
#include "moca/kernels/kernels.hpp"

namespace moca {

void NoiseSchedule::check_t(int t) const {
    if (t < 0 || t > num_train_steps)
        throw runtime_failure("timestep " + std::to_string(t) + " outside [0, " +
                              std::to_string(num_train_steps) + "]");
}

void SamplerConfig::validate(int num_train_steps) const {
    if (num_inference_steps < 1 || num_inference_steps > num_train_steps)
        throw usage_error("num_inference_steps must be in [1, " +
                          std::to_string(num_train_steps) + "], got " +
                          std::to_string(num_inference_steps));
    if (eta < 0.0) throw usage_error("eta must be >= 0");
}

NoiseSchedule make_schedule(int num_train_steps, ScheduleBase base) {
    if (num_train_steps < 2) throw usage_error("schedule needs at least 2 train steps");
    const int n = num_train_steps;
    NoiseSchedule s;
    s.num_train_steps = n;
    s.alpha_bar.assign(static_cast<size_t>(n) + 1, 1.0);

    if (base == ScheduleBase::linear) {
        const double beta_lo = 1e-4, beta_hi = 0.02;
        double prod = 1.0;
        for (int t = 1; t <= n; ++t) {
            double beta = beta_lo + (beta_hi - beta_lo) * (t - 1) / (n - 1);
            prod *= 1.0 - beta;
            s.alpha_bar[static_cast<size_t>(t)] = prod;
        }
    } else {
        const double off = 0.008;
        auto f = [&](double t) {
            double x = (t / n + off) / (1.0 + off) * (M_PI / 2.0);
            double c = std::cos(x);
            return c * c;
        };
        double f0 = f(0.0);
        for (int t = 1; t <= n; ++t)
            s.alpha_bar[static_cast<size_t>(t)] = f(static_cast<double>(t)) / f0;
    }

    // Affine rescale in sqrt space: terminal -> 0, first step preserved.
    double s1 = std::sqrt(s.alpha_bar[1]);
    double sn = std::sqrt(s.alpha_bar[static_cast<size_t>(n)]);
    double gain = s1 / (s1 - sn);
    for (int t = 1; t <= n; ++t) {
        double st = gain * (std::sqrt(s.alpha_bar[static_cast<size_t>(t)]) - sn);
        s.alpha_bar[static_cast<size_t>(t)] = st * st;
    }
    s.alpha_bar[0] = 1.0;
    s.alpha_bar[static_cast<size_t>(n)] = 0.0;
    return s;
}

namespace {

// out = a*x + b*y elementwise over latent-shaped tensors.
Tensor affine_mix(const Tensor& x, const Tensor& y, double a, double b, const char* where) {
    check_same_shape(x, y, where);
    Tensor out;
    out.shape = x.shape;
    out.data.resize(x.data.size());
    kernels::active().axpby(x.data.size(), static_cast<float>(a), x.data.data(),
                            static_cast<float>(b), y.data.data(), out.data.data());
    return out;
}

}  // namespace

LatentVideo add_noise(const LatentVideo& x0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    sched.check_t(t);
    LatentVideo z;
    z.latents = affine_mix(x0.latents, eps, sched.alpha(t), sched.sigma(t), "add_noise");
    return z;
}

Tensor v_target(const LatentVideo& x0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    sched.check_t(t);
    return affine_mix(eps, x0.latents, sched.alpha(t), -sched.sigma(t), "v_target");
}

LatentVideo predict_x0_from_v(const LatentVideo& z_t, const Tensor& v, int t, const NoiseSchedule& sched) {
    sched.check_t(t);
    LatentVideo x0;
    x0.latents = affine_mix(z_t.latents, v, sched.alpha(t), -sched.sigma(t), "predict_x0_from_v");
    return x0;
}

Tensor predict_eps_from_v(const LatentVideo& z_t, const Tensor& v, int t, const NoiseSchedule& sched) {
    sched.check_t(t);
    return affine_mix(z_t.latents, v, sched.sigma(t), sched.alpha(t), "predict_eps_from_v");
}

LatentVideo ddim_step(const LatentVideo& z_t, const Tensor& v_pred, int t, int t_prev,
                      const NoiseSchedule& sched, const SamplerConfig& cfg, Rng& rng) {
    sched.check_t(t);
    sched.check_t(t_prev);
    if (t_prev >= t) throw runtime_failure("ddim_step needs t_prev < t");

    LatentVideo x0 = predict_x0_from_v(z_t, v_pred, t, sched);
    Tensor eps = predict_eps_from_v(z_t, v_pred, t, sched);

    double a_prev = sched.alpha(t_prev);
    double s_prev = sched.sigma(t_prev);
    double sigma_eta = 0.0;
    if (cfg.eta > 0.0 && t_prev > 0) {
        double ab_t = sched.alpha_bar[static_cast<size_t>(t)];
        double ab_prev = sched.alpha_bar[static_cast<size_t>(t_prev)];
        sigma_eta = cfg.eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) *
                    std::sqrt(1.0 - ab_t / ab_prev);
    }
    double dir = std::sqrt(std::max(0.0, s_prev * s_prev - sigma_eta * sigma_eta));

    LatentVideo out;
    out.latents = affine_mix(x0.latents, eps, a_prev, dir, "ddim_step");
    if (sigma_eta > 0.0) {
        for (float& x : out.latents.data)
            x += static_cast<float>(sigma_eta * rng.normal());
    }
    return out;
}

std::vector<int> inference_timesteps(int num_train_steps, int num_inference_steps) {
    const int n = num_train_steps, k = num_inference_steps;
    if (k < 1 || k > n)
        throw usage_error("num_inference_steps must be in [1, " + std::to_string(n) + "]");
    // Trailing spacing: t_i = round(n * (k - i) / k), i = 0..k-1; pairs with
    // t_prev = next entry (or 0 for the last), so the chain always ends at 0.
    std::vector<int> ts;
    ts.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        int t = static_cast<int>(std::llround(static_cast<double>(n) * (k - i) / k));
        if (!ts.empty() && t >= ts.back()) t = ts.back() - 1;
        if (t < 1) throw runtime_failure("inference timestep spacing collapsed");
        ts.push_back(t);
    }
    return ts;
}

}  // namespace moca
