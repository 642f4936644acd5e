#pragma once

// Internal building blocks for the conv networks; not installed.

#include <torch/torch.h>

#include <cmath>

namespace harmony::detail {

inline int64_t gn_groups(int64_t channels) {
    for (int64_t g : {8, 4, 2}) {
        if (channels % g == 0) return g;
    }
    return 1;
}

// GroupNorm/SiLU/conv x2 with optional timestep injection and a learned skip
// when the channel count changes.
struct ResBlockImpl : torch::nn::Module {
    ResBlockImpl(int64_t in_ch, int64_t out_ch, int64_t time_dim) {
        norm1 = register_module("norm1", torch::nn::GroupNorm(gn_groups(in_ch), in_ch));
        conv1 = register_module(
            "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
        norm2 = register_module("norm2", torch::nn::GroupNorm(gn_groups(out_ch), out_ch));
        conv2 = register_module(
            "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
        if (time_dim > 0)
            time_proj = register_module("time_proj", torch::nn::Linear(time_dim, out_ch));
        if (in_ch != out_ch)
            skip = register_module("skip",
                                   torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1)));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb = {}) {
        torch::Tensor h = conv1(torch::silu(norm1(x)));
        if (time_proj && temb.defined())
            h = h + time_proj(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
        h = conv2(torch::silu(norm2(h)));
        return h + (skip ? skip(x) : x);
    }

    // lets Sequential call the single-argument form
    FORWARD_HAS_DEFAULT_ARGS({1, torch::nn::AnyValue(torch::Tensor())})

    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::Linear time_proj{nullptr};
    torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResBlock);

// Cross-attention from spatial positions onto an external context sequence.
struct CrossAttentionImpl : torch::nn::Module {
    CrossAttentionImpl(int64_t channels, int64_t context_dim, int64_t heads) : num_heads(heads) {
        norm = register_module("norm", torch::nn::GroupNorm(gn_groups(channels), channels));
        to_q = register_module("to_q", torch::nn::Linear(torch::nn::LinearOptions(channels, channels).bias(false)));
        to_k = register_module("to_k", torch::nn::Linear(torch::nn::LinearOptions(context_dim, channels).bias(false)));
        to_v = register_module("to_v", torch::nn::Linear(torch::nn::LinearOptions(context_dim, channels).bias(false)));
        to_out = register_module("to_out", torch::nn::Linear(channels, channels));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context) {
        const int64_t n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
        torch::Tensor q = norm(x).flatten(2).transpose(1, 2);  // n, hw, c
        q = to_q(q);
        torch::Tensor k = to_k(context);
        torch::Tensor v = to_v(context);

        const int64_t hd = c / num_heads;
        auto split = [&](torch::Tensor t) {
            return t.reshape({n, t.size(1), num_heads, hd}).transpose(1, 2);  // n, heads, len, hd
        };
        q = split(q);
        k = split(k);
        v = split(v);
        torch::Tensor attn =
            torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd)), -1);
        torch::Tensor out = torch::matmul(attn, v).transpose(1, 2).reshape({n, h * w, c});
        out = to_out(out).transpose(1, 2).reshape({n, c, h, w});
        return x + out;
    }

    torch::nn::GroupNorm norm{nullptr};
    torch::nn::Linear to_q{nullptr}, to_k{nullptr}, to_v{nullptr}, to_out{nullptr};
    int64_t num_heads;
};
TORCH_MODULE(CrossAttention);

// ResBlock plus optional cross-attention, the unit the UNet ladder is made of.
struct UNetBlockImpl : torch::nn::Module {
    UNetBlockImpl(int64_t in_ch, int64_t out_ch, int64_t time_dim, bool with_attn,
                  int64_t context_dim, int64_t heads) {
        res = register_module("res", ResBlock(in_ch, out_ch, time_dim));
        if (with_attn)
            attn = register_module("attn", CrossAttention(out_ch, context_dim, heads));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb,
                          const torch::Tensor& context) {
        torch::Tensor h = res(x, temb);
        if (attn) h = attn(h, context);
        return h;
    }

    ResBlock res{nullptr};
    CrossAttention attn{nullptr};
};
TORCH_MODULE(UNetBlock);

inline torch::nn::Conv2d make_downsample(int64_t channels) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).stride(2).padding(1));
}

// Nearest x2 upsample followed by a conv.
struct UpsampleImpl : torch::nn::Module {
    explicit UpsampleImpl(int64_t channels) {
        conv = register_module("conv",
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
    }
    torch::Tensor forward(const torch::Tensor& x) {
        namespace F = torch::nn::functional;
        return conv(F::interpolate(x, F::InterpolateFuncOptions()
                                          .scale_factor(std::vector<double>{2.0, 2.0})
                                          .mode(torch::kNearest)));
    }
    torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(Upsample);

// Sinusoidal timestep features, cos half then sin half.
inline torch::Tensor sinusoidal_embedding(const torch::Tensor& timesteps, int64_t dim) {
    const int64_t half = dim / 2;
    torch::Tensor freqs = torch::exp(
        torch::arange(half, torch::kFloat32) * (-std::log(10000.0) / static_cast<double>(half)));
    torch::Tensor args = timesteps.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::cos(args), torch::sin(args)}, 1);
}

}  // namespace harmony::detail
