#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

#include "harmony/schedule.hpp"

namespace harmony {

// Epsilon predictor: (scaled latent input, timestep index) -> predicted noise.
// The input is already divided by sqrt(sigma^2 + 1), i.e. expressed at the
// variance-preserving scale the network was trained on.
using DenoiseFn = std::function<torch::Tensor(const torch::Tensor&, int64_t)>;

struct SamplerConfig {
    int64_t num_inference_steps = 5;
    double guidance_scale = 0.0;  // w; effective weight on cond is (1 + w)
    uint64_t seed = 0;
};

// One Euler ancestral update in sigma space. `denoised` is the model's x0
// estimate reconstructed from eps_pred. When sigma_to == 0 the step returns
// `denoised` directly so the final step is exact.
torch::Tensor euler_ancestral_step(const torch::Tensor& x, const torch::Tensor& eps_pred,
                                   double sigma_from, double sigma_to,
                                   const torch::Tensor& rng_noise);

// Ancestral noise scale split: sigma_up^2 + sigma_down^2 = sigma_to^2.
struct AncestralScales {
    double sigma_up;
    double sigma_down;
};
AncestralScales ancestral_scales(double sigma_from, double sigma_to);

// Runs the full sampling loop. `init_noise` must be unit Gaussian with the
// target latent shape; it is scaled by sigma(t0) internally. `gen` supplies
// the per-step ancestral noise draws, consumed in loop order.
torch::Tensor sample(const DenoiseFn& model, const torch::Tensor& init_noise,
                     const SamplerConfig& config, const NoiseSchedule& schedule,
                     torch::Generator& gen);

// Derives init noise and the ancestral noise stream from config.seed:
// the first randn fills init_noise, subsequent draws feed the steps.
torch::Tensor sample_seeded(const DenoiseFn& model, torch::IntArrayRef latent_shape,
                            const SamplerConfig& config, const NoiseSchedule& schedule);

}  // namespace harmony
