#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace harmony {

// Discrete diffusion noise schedule shared by training and sampling.
//
// alpha_bars[t] = prod_{s<=t} (1 - betas[s]),  sigmas[t] = sqrt((1-abar_t)/abar_t).
// alpha_bars is strictly decreasing, sigmas strictly increasing, sigmas[0] > 0.
struct NoiseSchedule {
    int64_t num_train_steps = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;
    std::vector<double> sigmas;

    double sigma(int64_t t) const { return sigmas.at(static_cast<size_t>(t)); }
    double alpha_bar(int64_t t) const { return alpha_bars.at(static_cast<size_t>(t)); }
};

// Scaled-linear rule: betas[t] = (sqrt(b0) + t/(T-1) * (sqrt(b1)-sqrt(b0)))^2.
// Defaults (T=1000, 0.00085, 0.012) are the published constants of the base
// checkpoint family this schedule mirrors.
NoiseSchedule build_schedule(int64_t num_train_steps = 1000, double beta_start = 0.00085,
                             double beta_end = 0.012);

// Forward process: sqrt(abar_t) * clean + sqrt(1-abar_t) * noise.
torch::Tensor add_noise(const torch::Tensor& clean_latent, const torch::Tensor& noise, int64_t t,
                        const NoiseSchedule& schedule);

// Strictly decreasing timestep indices from T-1 toward 0, evenly spaced
// (linspace inclusive of both ends, round half away from zero).
std::vector<int64_t> select_timesteps(int64_t num_inference_steps, const NoiseSchedule& schedule);

}  // namespace harmony
