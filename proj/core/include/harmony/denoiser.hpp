#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace harmony {

struct DenoiserSettings {
    int64_t latent_channels = 4;
    int64_t base_channels = 48;
    std::vector<int64_t> channel_mults = {1, 2};
    std::vector<int64_t> attention_levels = {1};  // indices into channel_mults
    int64_t num_res_blocks = 1;
    int64_t num_heads = 2;
    int64_t context_length = 4;
    int64_t context_dim = 32;

    int64_t input_channels() const { return 2 * latent_channels + 1; }
    void validate() const;
};

struct DenoiserInput {
    torch::Tensor noisy_latent;      // (N,)C,h,w
    torch::Tensor mask_lowres;       // (N,)1,h,w in {0,1}
    torch::Tensor composite_latent;  // (N,)C,h,w
    int64_t timestep = 0;
    torch::Tensor text_condition;    // (N,)L,D; empty means the model's null embedding
};

// UNet epsilon predictor over the 2C+1 channel concatenation of noisy
// latent, downsampled mask and composite latent, with sinusoidal timestep
// embeddings and cross-attention onto a (null) text context.
class ConditionalDenoiserImpl : public torch::nn::Module {
  public:
    explicit ConditionalDenoiserImpl(DenoiserSettings settings);

    // timesteps: int64 tensor (N,). context: (N,L,D) or undefined for null.
    torch::Tensor forward(const torch::Tensor& unet_input, const torch::Tensor& timesteps,
                          const torch::Tensor& context);

    // The empty-prompt embedding, a learned constant (L,D). Same handle on
    // every call.
    torch::Tensor null_context() const { return null_context_; }

    const DenoiserSettings& settings() const { return settings_; }

  private:
    torch::Tensor time_embedding(const torch::Tensor& timesteps);

    DenoiserSettings settings_;
    torch::nn::Linear time_mlp1_{nullptr}, time_mlp2_{nullptr};
    torch::nn::Conv2d conv_in_{nullptr}, conv_out_{nullptr};
    torch::nn::GroupNorm norm_out_{nullptr};
    torch::nn::ModuleList down_blocks_, downsamples_;
    torch::nn::ModuleList mid_blocks_;
    torch::nn::ModuleList up_blocks_, upsamples_;
    torch::Tensor null_context_;
};
TORCH_MODULE(ConditionalDenoiser);

// Validates the channel contract (2*latent_channels+1 after concatenation)
// and the timestep range, concatenates, and runs the network. Deterministic.
torch::Tensor predict_noise(const DenoiserInput& input, ConditionalDenoiser& model,
                            int64_t num_train_steps = 1000);

// Classifier-free guidance: eps_cond + w*(eps_cond - eps_uncond), which is
// (1+w)*eps_cond - w*eps_uncond arranged so w=0 and equal branches are exact.
torch::Tensor cfg_combine(const torch::Tensor& eps_cond, const torch::Tensor& eps_uncond, double w);

torch::Tensor null_text_embedding(const ConditionalDenoiser& model);

}  // namespace harmony
