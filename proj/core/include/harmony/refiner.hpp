#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace harmony {

inline constexpr int64_t kRefineResolution = 256;

struct RefinerSettings {
    int64_t base_channels = 8;
    int64_t num_stages = 4;  // stride-2 downsamples, mirrored on the way up

    void validate() const;
};

// Residual UNet operating at 256px on the 7-channel concatenation of the
// stage-1 output, the composite and the mask. The final conv starts at zero
// so a fresh refiner is the identity on its first input.
class RefinerImpl : public torch::nn::Module {
  public:
    explicit RefinerImpl(RefinerSettings settings);

    // All inputs 256x256: harmonized/composite are (N,)3,H,W in [-1,1],
    // mask (N,)1,H,W in {0,1}. Returns clamp(harmonized + residual, -1, 1).
    torch::Tensor forward(const torch::Tensor& harmonized, const torch::Tensor& composite,
                          const torch::Tensor& mask);

    torch::Tensor residual(const torch::Tensor& harmonized, const torch::Tensor& composite,
                           const torch::Tensor& mask);

    const RefinerSettings& settings() const { return settings_; }

  private:
    RefinerSettings settings_;
    torch::nn::Conv2d conv_in_{nullptr}, conv_out_{nullptr};
    torch::nn::ModuleList down_blocks_, up_blocks_;
    std::vector<int64_t> stage_channels_;
};
TORCH_MODULE(Refiner);

torch::Tensor refine(const torch::Tensor& harmonized, const torch::Tensor& composite,
                     const torch::Tensor& mask, Refiner& model);

}  // namespace harmony
