#include "harmony/sampler.hpp"

#include <cmath>

#include "harmony/errors.hpp"
#include "harmony/rng.hpp"

namespace harmony {

AncestralScales ancestral_scales(double sigma_from, double sigma_to) {
    if (sigma_from <= 0.0) throw ParamError("ancestral_scales: sigma_from must be positive");
    if (sigma_to < 0.0 || sigma_to > sigma_from)
        throw ParamError("ancestral_scales: need 0 <= sigma_to <= sigma_from");
    const double up2 =
        sigma_to * sigma_to * (sigma_from * sigma_from - sigma_to * sigma_to) / (sigma_from * sigma_from);
    AncestralScales out;
    out.sigma_up = std::sqrt(up2);
    out.sigma_down = sigma_to * sigma_to / sigma_from;  // sqrt(sigma_to^2 - up^2) simplified
    return out;
}

torch::Tensor euler_ancestral_step(const torch::Tensor& x, const torch::Tensor& eps_pred,
                                   double sigma_from, double sigma_to,
                                   const torch::Tensor& rng_noise) {
    torch::Tensor denoised = x - eps_pred * sigma_from;
    if (sigma_to == 0.0) return denoised;

    const AncestralScales sc = ancestral_scales(sigma_from, sigma_to);
    torch::Tensor d = (x - denoised) / sigma_from;  // == eps_pred, kept explicit for clarity
    torch::Tensor x_next = x + d * (sc.sigma_down - sigma_from);
    return x_next + rng_noise * sc.sigma_up;
}

torch::Tensor sample(const DenoiseFn& model, const torch::Tensor& init_noise,
                     const SamplerConfig& config, const NoiseSchedule& schedule,
                     torch::Generator& gen) {
    if (config.num_inference_steps < 1)
        throw ParamError("sample: num_inference_steps must be >= 1");
    const std::vector<int64_t> ts = select_timesteps(config.num_inference_steps, schedule);

    torch::Tensor x = init_noise * schedule.sigma(ts[0]);
    for (size_t i = 0; i < ts.size(); ++i) {
        const double sigma_from = schedule.sigma(ts[i]);
        const double sigma_to = (i + 1 < ts.size()) ? schedule.sigma(ts[i + 1]) : 0.0;

        torch::Tensor model_in = x / std::sqrt(sigma_from * sigma_from + 1.0);
        torch::Tensor eps = model(model_in, ts[i]);
        if (!eps.sizes().equals(x.sizes())) throw ParamError("sample: model output shape mismatch");

        torch::Tensor noise;
        if (sigma_to > 0.0) {
            noise = torch::randn(x.sizes(), gen, x.options());
        } else {
            noise = torch::Tensor();
        }
        x = euler_ancestral_step(x, eps, sigma_from, sigma_to, noise);
    }
    return x;
}

torch::Tensor sample_seeded(const DenoiseFn& model, torch::IntArrayRef latent_shape,
                            const SamplerConfig& config, const NoiseSchedule& schedule) {
    torch::Generator gen = make_generator(config.seed);
    torch::Tensor init_noise = torch::randn(latent_shape, gen, torch::kFloat32);
    return sample(model, init_noise, config, schedule, gen);
}

}  // namespace harmony
