#include "harmony/pipeline.hpp"

#include <atomic>
#include <thread>

#include "harmony/errors.hpp"
#include "harmony/image.hpp"

namespace harmony {

namespace {

void validate_request(const HarmonizationRequest& req, const PipelineModels& models) {
    if (models.codec.is_empty() || models.denoiser.is_empty())
        throw ParamError("harmonize: models not loaded");
    if (models.schedule.num_train_steps < 1) throw ParamError("harmonize: schedule not built");
    if (!req.composite.defined() || req.composite.dim() != 3 || req.composite.size(0) != 3)
        throw ParamError("harmonize: composite must be 3,H,W");
    if (!req.mask.defined() || req.mask.dim() != 3 || req.mask.size(0) != 1)
        throw ParamError("harmonize: mask must be 1,H,W");
    if (req.mask.size(1) != req.composite.size(1) || req.mask.size(2) != req.composite.size(2))
        throw ParamError("harmonize: mask and composite sizes differ");
    torch::Tensor m = req.mask.to(torch::kFloat32);
    if (!((m == 0.0).logical_or(m == 1.0)).all().item<bool>())
        throw ParamError("harmonize: non-binary mask");
    const int64_t f = models.codec->settings().downsample_factor;
    if (req.inference_resolution < f || req.inference_resolution % f != 0)
        throw ParamError("harmonize: inference_resolution must be a positive multiple of " +
                         std::to_string(f));
    if (req.output_resolution < 1) throw ParamError("harmonize: output_resolution invalid");
}

}  // namespace

torch::Tensor harmonize(const HarmonizationRequest& request, PipelineModels& models) {
    validate_request(request, models);
    torch::NoGradGuard ng;

    const int64_t R = request.inference_resolution;
    torch::Tensor comp_r = resize_bicubic(request.composite, R, R).clamp(0.0, 1.0);
    torch::Tensor mask_r = resize_nearest(request.mask, R, R);

    torch::Tensor comp_latent = models.codec->encode(to_signed(comp_r)).unsqueeze(0);
    const int64_t lat = R / models.codec->settings().downsample_factor;
    torch::Tensor mask_low = resize_nearest(mask_r, lat, lat).unsqueeze(0);
    torch::Tensor ctx = models.denoiser->null_context().unsqueeze(0);

    const double w = request.sampler.guidance_scale;
    DenoiseFn fn = [&](const torch::Tensor& x, int64_t t) {
        torch::Tensor ts = torch::full({x.size(0)}, t, torch::kLong);
        torch::Tensor eps_cond =
            models.denoiser->forward(torch::cat({x, mask_low, comp_latent}, 1), ts, ctx);
        if (w == 0.0) return eps_cond;
        torch::Tensor eps_uncond = models.denoiser->forward(
            torch::cat({x, torch::zeros_like(mask_low), torch::zeros_like(comp_latent)}, 1), ts,
            ctx);
        return cfg_combine(eps_cond, eps_uncond, w);
    };

    const int64_t C = models.codec->settings().latent_channels;
    torch::Tensor latents =
        sample_seeded(fn, {1, C, lat, lat}, request.sampler, models.schedule);
    torch::Tensor img = to_unit(models.codec->decode(latents)).squeeze(0);

    if (request.blend_background) img = mask_r * img + (1.0 - mask_r) * comp_r;

    return resize_bicubic(img, request.output_resolution, request.output_resolution)
        .clamp(0.0, 1.0);
}

std::vector<BatchItemResult> harmonize_batch(std::vector<HarmonizationRequest> requests,
                                             PipelineModels& models, int parallelism,
                                             uint64_t base_seed) {
    if (requests.empty()) throw ParamError("harmonize_batch: empty request list");
    if (parallelism < 1) throw ParamError("harmonize_batch: parallelism must be >= 1");

    const size_t n = requests.size();
    for (size_t i = 0; i < n; ++i) requests[i].sampler.seed = base_seed + i;

    std::vector<BatchItemResult> results(n);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            BatchItemResult r;
            r.index = static_cast<int64_t>(i);
            r.seed = requests[i].sampler.seed;
            try {
                r.image = harmonize(requests[i], models);
                r.ok = true;
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
            }
            results[i] = std::move(r);
        }
    };

    const size_t workers = std::min<size_t>(static_cast<size_t>(parallelism), n);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return results;
}

torch::Tensor harmonize_refined(const HarmonizationRequest& request, PipelineModels& models,
                                Refiner* refiner) {
    const bool with_refiner = refiner != nullptr && !refiner->is_empty();
    HarmonizationRequest stage1 = request;
    if (with_refiner) stage1.output_resolution = kRefineResolution;
    torch::Tensor out = harmonize(stage1, models);
    if (!with_refiner) return out;

    torch::Tensor comp =
        resize_bicubic(request.composite, kRefineResolution, kRefineResolution).clamp(0.0, 1.0);
    torch::Tensor mask = resize_nearest(request.mask, kRefineResolution, kRefineResolution);
    torch::NoGradGuard ng;
    out = to_unit(refine(to_signed(out), to_signed(comp), mask, *refiner));
    if (request.output_resolution != kRefineResolution)
        out = resize_bicubic(out, request.output_resolution, request.output_resolution)
                  .clamp(0.0, 1.0);
    return out;
}

}  // namespace harmony
