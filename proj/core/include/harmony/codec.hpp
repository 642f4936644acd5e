#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace harmony {

struct CodecSettings {
    int64_t downsample_factor = 8;
    int64_t latent_channels = 4;
    int64_t base_channels = 16;
    std::vector<int64_t> channel_mults = {1, 1, 2, 2};  // one stride-2 stage per step between entries
    double scaling_factor = 0.18215;
    double kl_weight = 1e-6;

    void validate() const;  // throws ParamError; 2^(mults-1) must equal downsample_factor
};

struct Posterior {
    torch::Tensor mean;
    torch::Tensor logvar;
};

// KL-regularized convolutional autoencoder. Images are NCHW (or CHW) in
// [-1,1]; latents carry scaling_factor so downstream diffusion sees roughly
// unit variance.
class LatentCodecImpl : public torch::nn::Module {
  public:
    explicit LatentCodecImpl(CodecSettings settings);

    Posterior encode_posterior(const torch::Tensor& image);

    // Deterministic when gen is null (posterior mean), sampled otherwise.
    // Output is scaled by scaling_factor.
    torch::Tensor encode(const torch::Tensor& image, torch::Generator* gen = nullptr);

    // Accepts scaled latents, returns images clamped to [-1,1].
    torch::Tensor decode(const torch::Tensor& latent);

    // Unclamped decoder output; training needs live gradients at the range
    // boundary.
    torch::Tensor decode_raw(const torch::Tensor& latent);

    const CodecSettings& settings() const { return settings_; }
    double scaling_factor() const { return scaling_factor_.item<double>(); }
    void set_scaling_factor(double s);

  private:
    CodecSettings settings_;
    torch::nn::Sequential encoder_{nullptr}, decoder_{nullptr};
    torch::Tensor scaling_factor_;  // buffer so it travels with checkpoints
};
TORCH_MODULE(LatentCodec);

struct CodecTrainConfig {
    int64_t steps = 2000;
    int64_t batch_size = 8;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    uint64_t seed = 0;
    int64_t log_every = 100;
    int64_t max_images = 600;  // cap on how many dataset images feed codec training
};

struct CodecTrainResult {
    std::vector<double> losses;
    double final_scaling_factor;
};

// Trains on CHW images in [0,1]; recomputes scaling_factor as 1/std of the
// posterior means over the training set afterwards. Throws TrainingError on
// NaN loss, ParamError on an empty dataset.
CodecTrainResult train_codec(LatentCodec& codec, const std::vector<torch::Tensor>& images,
                             const CodecTrainConfig& config);

// Mean round-trip MSE on the 0-255 scale: each image is resized to
// `resolution`, round-tripped deterministically, and both sides are brought
// to 256px before comparison.
double reconstruction_error(const std::vector<torch::Tensor>& images, LatentCodec& codec,
                            int64_t resolution);

}  // namespace harmony
