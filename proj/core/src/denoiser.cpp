#include "harmony/denoiser.hpp"

#include <algorithm>

#include "harmony/errors.hpp"
#include "unet_blocks.hpp"

namespace harmony {

using detail::UNetBlock;

void DenoiserSettings::validate() const {
    if (latent_channels < 1) throw ParamError("denoiser: latent_channels must be >= 1");
    if (base_channels < 1 || base_channels % 2 != 0)
        throw ParamError("denoiser: base_channels must be positive and even");
    if (channel_mults.empty()) throw ParamError("denoiser: channel_mults must be nonempty");
    if (num_res_blocks < 1) throw ParamError("denoiser: num_res_blocks must be >= 1");
    if (num_heads < 1) throw ParamError("denoiser: num_heads must be >= 1");
    if (context_length < 1 || context_dim < 1)
        throw ParamError("denoiser: context shape must be positive");
    for (int64_t lvl : attention_levels)
        if (lvl < 0 || lvl >= static_cast<int64_t>(channel_mults.size()))
            throw ParamError("denoiser: attention level out of range");
    for (int64_t m : channel_mults)
        if (m < 1 || (base_channels * m) % num_heads != 0)
            throw ParamError("denoiser: channel widths must divide by num_heads");
}

ConditionalDenoiserImpl::ConditionalDenoiserImpl(DenoiserSettings settings)
    : settings_(std::move(settings)) {
    settings_.validate();
    using torch::nn::Conv2d;
    using torch::nn::Conv2dOptions;

    const int64_t base = settings_.base_channels;
    const int64_t time_dim = base * 4;
    const auto& mults = settings_.channel_mults;
    const int64_t levels = static_cast<int64_t>(mults.size());
    auto has_attn = [&](int64_t lvl) {
        return std::find(settings_.attention_levels.begin(), settings_.attention_levels.end(),
                         lvl) != settings_.attention_levels.end();
    };

    time_mlp1_ = register_module("time_mlp1", torch::nn::Linear(base, time_dim));
    time_mlp2_ = register_module("time_mlp2", torch::nn::Linear(time_dim, time_dim));
    conv_in_ = register_module(
        "conv_in", Conv2d(Conv2dOptions(settings_.input_channels(), base * mults[0], 3).padding(1)));

    down_blocks_ = register_module("down_blocks", torch::nn::ModuleList());
    downsamples_ = register_module("downsamples", torch::nn::ModuleList());
    up_blocks_ = register_module("up_blocks", torch::nn::ModuleList());
    upsamples_ = register_module("upsamples", torch::nn::ModuleList());
    mid_blocks_ = register_module("mid_blocks", torch::nn::ModuleList());

    std::vector<int64_t> skip_channels;
    int64_t ch = base * mults[0];
    skip_channels.push_back(ch);
    for (int64_t lvl = 0; lvl < levels; ++lvl) {
        const int64_t out = base * mults[lvl];
        for (int64_t b = 0; b < settings_.num_res_blocks; ++b) {
            down_blocks_->push_back(UNetBlock(ch, out, time_dim, has_attn(lvl),
                                              settings_.context_dim, settings_.num_heads));
            ch = out;
            skip_channels.push_back(ch);
        }
        if (lvl + 1 < levels) {
            downsamples_->push_back(detail::make_downsample(ch));
            skip_channels.push_back(ch);
        }
    }

    mid_blocks_->push_back(UNetBlock(ch, ch, time_dim, true, settings_.context_dim,
                                     settings_.num_heads));
    mid_blocks_->push_back(UNetBlock(ch, ch, time_dim, false, settings_.context_dim,
                                     settings_.num_heads));

    for (int64_t lvl = levels - 1; lvl >= 0; --lvl) {
        const int64_t out = base * mults[lvl];
        for (int64_t b = 0; b < settings_.num_res_blocks + 1; ++b) {
            const int64_t skip = skip_channels.back();
            skip_channels.pop_back();
            up_blocks_->push_back(UNetBlock(ch + skip, out, time_dim, has_attn(lvl),
                                            settings_.context_dim, settings_.num_heads));
            ch = out;
        }
        if (lvl > 0) upsamples_->push_back(detail::Upsample(ch));
    }

    norm_out_ = register_module("norm_out", torch::nn::GroupNorm(detail::gn_groups(ch), ch));
    conv_out_ = register_module(
        "conv_out", Conv2d(Conv2dOptions(ch, settings_.latent_channels, 3).padding(1)));
    {
        torch::NoGradGuard ng;
        conv_out_->weight.zero_();
        conv_out_->bias.zero_();
    }

    null_context_ = register_parameter(
        "null_context",
        torch::randn({settings_.context_length, settings_.context_dim}) * 0.02);
}

torch::Tensor ConditionalDenoiserImpl::time_embedding(const torch::Tensor& timesteps) {
    torch::Tensor emb = detail::sinusoidal_embedding(timesteps, settings_.base_channels);
    return time_mlp2_(torch::silu(time_mlp1_(emb)));
}

torch::Tensor ConditionalDenoiserImpl::forward(const torch::Tensor& unet_input,
                                               const torch::Tensor& timesteps,
                                               const torch::Tensor& context) {
    if (unet_input.dim() != 4 || unet_input.size(1) != settings_.input_channels())
        throw ParamError("denoiser: input must be N x (2*latent_channels+1) x h x w");
    const int64_t n = unet_input.size(0);
    torch::Tensor ts = timesteps.dim() == 0 ? timesteps.expand({n}) : timesteps;
    if (ts.size(0) != n) throw ParamError("denoiser: timestep batch mismatch");
    torch::Tensor ctx = context.defined() ? context : null_context_.unsqueeze(0).expand({n, -1, -1});
    if (ctx.dim() == 2) ctx = ctx.unsqueeze(0).expand({n, -1, -1});
    if (ctx.size(-1) != settings_.context_dim) throw ParamError("denoiser: context dim mismatch");

    torch::Tensor temb = time_embedding(ts);
    torch::Tensor h = conv_in_(unet_input);

    std::vector<torch::Tensor> skips{h};
    size_t down_i = 0, sample_i = 0;
    const int64_t levels = static_cast<int64_t>(settings_.channel_mults.size());
    for (int64_t lvl = 0; lvl < levels; ++lvl) {
        for (int64_t b = 0; b < settings_.num_res_blocks; ++b) {
            h = down_blocks_->at<detail::UNetBlockImpl>(down_i++).forward(h, temb, ctx);
            skips.push_back(h);
        }
        if (lvl + 1 < levels) {
            h = downsamples_->at<torch::nn::Conv2dImpl>(sample_i++).forward(h);
            skips.push_back(h);
        }
    }

    h = mid_blocks_->at<detail::UNetBlockImpl>(0).forward(h, temb, ctx);
    h = mid_blocks_->at<detail::UNetBlockImpl>(1).forward(h, temb, ctx);

    size_t up_i = 0, upsample_i = 0;
    for (int64_t lvl = levels - 1; lvl >= 0; --lvl) {
        for (int64_t b = 0; b < settings_.num_res_blocks + 1; ++b) {
            h = torch::cat({h, skips.back()}, 1);
            skips.pop_back();
            h = up_blocks_->at<detail::UNetBlockImpl>(up_i++).forward(h, temb, ctx);
        }
        if (lvl > 0) h = upsamples_->at<detail::UpsampleImpl>(upsample_i++).forward(h);
    }

    return conv_out_(torch::silu(norm_out_(h)));
}

torch::Tensor predict_noise(const DenoiserInput& input, ConditionalDenoiser& model,
                            int64_t num_train_steps) {
    torch::Tensor noisy = input.noisy_latent, mask = input.mask_lowres,
                  comp = input.composite_latent;
    const bool was_3d = noisy.dim() == 3;
    if (was_3d) {
        noisy = noisy.unsqueeze(0);
        mask = mask.unsqueeze(0);
        comp = comp.unsqueeze(0);
    }
    const auto& s = model->settings();
    if (noisy.dim() != 4 || noisy.size(1) != s.latent_channels)
        throw ParamError("predict_noise: noisy_latent channel mismatch");
    if (comp.sizes() != noisy.sizes())
        throw ParamError("predict_noise: composite_latent shape mismatch");
    if (mask.dim() != 4 || mask.size(1) != 1 || mask.size(2) != noisy.size(2) ||
        mask.size(3) != noisy.size(3) || mask.size(0) != noisy.size(0))
        throw ParamError("predict_noise: mask_lowres shape mismatch");
    if (input.timestep < 0 || input.timestep >= num_train_steps)
        throw ParamError("predict_noise: timestep out of range");

    torch::Tensor unet_in = torch::cat({noisy, mask, comp}, 1);
    if (unet_in.size(1) != 2 * s.latent_channels + 1)
        throw ParamError("predict_noise: concatenated channel contract violated");
    torch::Tensor ts = torch::full({noisy.size(0)}, input.timestep, torch::kLong);
    torch::Tensor ctx = input.text_condition;
    torch::Tensor eps = model->forward(unet_in, ts, ctx);
    return was_3d ? eps.squeeze(0) : eps;
}

torch::Tensor cfg_combine(const torch::Tensor& eps_cond, const torch::Tensor& eps_uncond,
                          double w) {
    if (w < 0.0) throw ParamError("cfg_combine: w must be >= 0");
    if (!eps_cond.sizes().equals(eps_uncond.sizes()))
        throw ParamError("cfg_combine: shape mismatch");
    if (w == 0.0) return eps_cond;
    // (1+w)*cond - w*uncond arranged for exactness when the branches agree
    return eps_cond + w * (eps_cond - eps_uncond);
}

torch::Tensor null_text_embedding(const ConditionalDenoiser& model) {
    return model->null_context();
}

}  // namespace harmony
