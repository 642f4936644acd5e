#include "harmony/schedule.hpp"

#include <cmath>

#include "harmony/errors.hpp"

namespace harmony {

NoiseSchedule build_schedule(int64_t num_train_steps, double beta_start, double beta_end) {
    if (num_train_steps < 1) throw ParamError("build_schedule: num_train_steps must be >= 1");
    if (!(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0))
        throw ParamError("build_schedule: need 0 < beta_start < beta_end < 1");

    NoiseSchedule s;
    s.num_train_steps = num_train_steps;
    s.betas.resize(num_train_steps);
    s.alpha_bars.resize(num_train_steps);
    s.sigmas.resize(num_train_steps);

    const double r0 = std::sqrt(beta_start);
    const double r1 = std::sqrt(beta_end);
    double abar = 1.0;
    for (int64_t t = 0; t < num_train_steps; ++t) {
        const double frac =
            num_train_steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(num_train_steps - 1);
        const double root = r0 + frac * (r1 - r0);
        s.betas[t] = root * root;
        abar *= 1.0 - s.betas[t];
        s.alpha_bars[t] = abar;
        s.sigmas[t] = std::sqrt((1.0 - abar) / abar);
    }
    return s;
}

torch::Tensor add_noise(const torch::Tensor& clean_latent, const torch::Tensor& noise, int64_t t,
                        const NoiseSchedule& schedule) {
    if (!clean_latent.sizes().equals(noise.sizes()))
        throw ParamError("add_noise: clean/noise shape mismatch");
    if (t < 0 || t >= schedule.num_train_steps) throw ParamError("add_noise: timestep out of range");
    const double abar = schedule.alpha_bars[t];
    return clean_latent * std::sqrt(abar) + noise * std::sqrt(1.0 - abar);
}

std::vector<int64_t> select_timesteps(int64_t num_inference_steps, const NoiseSchedule& schedule) {
    const int64_t T = schedule.num_train_steps;
    if (num_inference_steps < 1 || num_inference_steps > T)
        throw ParamError("select_timesteps: need 1 <= num_inference_steps <= num_train_steps");

    std::vector<int64_t> ts(num_inference_steps);
    if (num_inference_steps == 1) {
        ts[0] = T - 1;
        return ts;
    }
    const double n1 = static_cast<double>(num_inference_steps - 1);
    for (int64_t i = 0; i < num_inference_steps; ++i) {
        const double v = static_cast<double>(T - 1) * (1.0 - static_cast<double>(i) / n1);
        ts[i] = std::llround(v);  // llround = half away from zero
    }
    return ts;
}

}  // namespace harmony
