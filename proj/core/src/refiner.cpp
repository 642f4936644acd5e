#include "harmony/refiner.hpp"

#include <algorithm>

#include "harmony/errors.hpp"
#include "unet_blocks.hpp"

namespace harmony {

void RefinerSettings::validate() const {
    if (base_channels < 1) throw ParamError("refiner: base_channels must be >= 1");
    if (num_stages < 1 || num_stages > 6) throw ParamError("refiner: num_stages out of range");
}

RefinerImpl::RefinerImpl(RefinerSettings settings) : settings_(std::move(settings)) {
    settings_.validate();
    using torch::nn::Conv2d;
    using torch::nn::Conv2dOptions;

    stage_channels_.clear();
    for (int64_t i = 0; i <= settings_.num_stages; ++i)
        stage_channels_.push_back(settings_.base_channels << std::min<int64_t>(i, 3));

    conv_in_ = register_module("conv_in",
                               Conv2d(Conv2dOptions(7, stage_channels_[0], 3).padding(1)));
    down_blocks_ = register_module("down_blocks", torch::nn::ModuleList());
    up_blocks_ = register_module("up_blocks", torch::nn::ModuleList());

    for (int64_t i = 0; i < settings_.num_stages; ++i) {
        down_blocks_->push_back(detail::ResBlock(stage_channels_[i], stage_channels_[i], 0));
        down_blocks_->push_back(
            Conv2d(Conv2dOptions(stage_channels_[i], stage_channels_[i + 1], 3).stride(2).padding(1)));
    }
    down_blocks_->push_back(
        detail::ResBlock(stage_channels_[settings_.num_stages], stage_channels_[settings_.num_stages], 0));

    for (int64_t i = settings_.num_stages - 1; i >= 0; --i) {
        up_blocks_->push_back(detail::Upsample(stage_channels_[i + 1]));
        up_blocks_->push_back(
            detail::ResBlock(stage_channels_[i + 1] + stage_channels_[i], stage_channels_[i], 0));
    }

    conv_out_ = register_module("conv_out", Conv2d(Conv2dOptions(stage_channels_[0], 3, 3).padding(1)));
    {
        // zero-init so a fresh refiner is the identity
        torch::NoGradGuard ng;
        conv_out_->weight.zero_();
        conv_out_->bias.zero_();
    }
}

namespace {

void validate_refiner_inputs(const torch::Tensor& harmonized, const torch::Tensor& composite,
                             const torch::Tensor& mask) {
    if (harmonized.dim() != 4 || harmonized.size(1) != 3)
        throw ParamError("refine: harmonized must be (N,)3,H,W");
    if (!composite.sizes().equals(harmonized.sizes()))
        throw ParamError("refine: composite shape mismatch");
    if (mask.dim() != 4 || mask.size(1) != 1 || mask.size(0) != harmonized.size(0) ||
        mask.size(2) != harmonized.size(2) || mask.size(3) != harmonized.size(3))
        throw ParamError("refine: mask shape mismatch");
    if (harmonized.size(2) != kRefineResolution || harmonized.size(3) != kRefineResolution)
        throw ParamError("refine: inputs must be 256x256");
}

}  // namespace

torch::Tensor RefinerImpl::residual(const torch::Tensor& harmonized,
                                    const torch::Tensor& composite, const torch::Tensor& mask) {
    const bool was_3d = harmonized.dim() == 3;
    torch::Tensor h_in = was_3d ? harmonized.unsqueeze(0) : harmonized;
    torch::Tensor c_in = was_3d ? composite.unsqueeze(0) : composite;
    torch::Tensor m_in = was_3d ? mask.unsqueeze(0) : mask;
    validate_refiner_inputs(h_in, c_in, m_in);

    torch::Tensor h = conv_in_(torch::cat({h_in, c_in, m_in}, 1));
    std::vector<torch::Tensor> skips;
    size_t di = 0;
    for (int64_t i = 0; i < settings_.num_stages; ++i) {
        h = down_blocks_->at<detail::ResBlockImpl>(di++).forward(h);
        skips.push_back(h);
        h = down_blocks_->at<torch::nn::Conv2dImpl>(di++).forward(h);
    }
    h = down_blocks_->at<detail::ResBlockImpl>(di++).forward(h);

    size_t ui = 0;
    for (int64_t i = settings_.num_stages - 1; i >= 0; --i) {
        h = up_blocks_->at<detail::UpsampleImpl>(ui++).forward(h);
        h = torch::cat({h, skips.back()}, 1);
        skips.pop_back();
        h = up_blocks_->at<detail::ResBlockImpl>(ui++).forward(h);
    }
    torch::Tensor out = conv_out_(h);
    return was_3d ? out.squeeze(0) : out;
}

torch::Tensor RefinerImpl::forward(const torch::Tensor& harmonized, const torch::Tensor& composite,
                                   const torch::Tensor& mask) {
    return (harmonized + residual(harmonized, composite, mask)).clamp(-1.0, 1.0);
}

torch::Tensor refine(const torch::Tensor& harmonized, const torch::Tensor& composite,
                     const torch::Tensor& mask, Refiner& model) {
    return model->forward(harmonized, composite, mask);
}

}  // namespace harmony
