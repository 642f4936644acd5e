#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "harmony/codec.hpp"
#include "harmony/denoiser.hpp"
#include "harmony/refiner.hpp"
#include "harmony/sampler.hpp"
#include "harmony/schedule.hpp"

namespace harmony {

struct HarmonizationRequest {
    torch::Tensor composite;  // 3,H,W in [0,1]
    torch::Tensor mask;       // 1,H,W in {0,1}, same H,W
    int64_t inference_resolution = 1024;
    int64_t output_resolution = 256;
    SamplerConfig sampler;
    bool blend_background = true;
};

struct PipelineModels {
    LatentCodec codec{nullptr};
    ConditionalDenoiser denoiser{nullptr};
    NoiseSchedule schedule;
};

// Stage 1: resize to inference_resolution, encode the composite, downsample
// the mask to latent resolution, sample, decode, optionally blend the
// original background back in, then downscale to output_resolution.
// Deterministic given request.sampler.seed. Returns 3,out,out in [0,1].
torch::Tensor harmonize(const HarmonizationRequest& request, PipelineModels& models);

struct BatchItemResult {
    int64_t index = 0;
    uint64_t seed = 0;
    bool ok = false;
    std::string error;
    torch::Tensor image;
};

// Order-preserving; item i runs with seed base_seed + i. Failures are
// recorded per item, the rest proceed. parallelism >= 1 worker threads.
std::vector<BatchItemResult> harmonize_batch(std::vector<HarmonizationRequest> requests,
                                             PipelineModels& models, int parallelism,
                                             uint64_t base_seed);

// Both stages: stage 1 at output resolution 256, then the residual refiner.
// Pass refiner = nullptr (or a null module) to stop after stage 1.
torch::Tensor harmonize_refined(const HarmonizationRequest& request, PipelineModels& models,
                                Refiner* refiner);

}  // namespace harmony
