#include "harmony/codec.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "harmony/errors.hpp"
#include "harmony/image.hpp"
#include "harmony/metrics.hpp"
#include "harmony/rng.hpp"
#include "unet_blocks.hpp"

namespace harmony {

using detail::gn_groups;

void CodecSettings::validate() const {
    if (latent_channels < 1) throw ParamError("codec: latent_channels must be >= 1");
    if (base_channels < 1) throw ParamError("codec: base_channels must be >= 1");
    if (channel_mults.empty()) throw ParamError("codec: channel_mults must be nonempty");
    if (scaling_factor <= 0.0) throw ParamError("codec: scaling_factor must be positive");
    const int64_t stages = static_cast<int64_t>(channel_mults.size()) - 1;
    if ((int64_t{1} << stages) != downsample_factor)
        throw ParamError("codec: downsample_factor must equal 2^(channel_mults-1)");
}

LatentCodecImpl::LatentCodecImpl(CodecSettings settings) : settings_(std::move(settings)) {
    settings_.validate();
    using torch::nn::Conv2d;
    using torch::nn::Conv2dOptions;

    const auto& mults = settings_.channel_mults;
    const int64_t levels = static_cast<int64_t>(mults.size());

    torch::nn::Sequential enc;
    int64_t ch = settings_.base_channels * mults[0];
    enc->push_back(Conv2d(Conv2dOptions(3, ch, 3).padding(1)));
    for (int64_t i = 0; i < levels; ++i) {
        const int64_t out = settings_.base_channels * mults[i];
        enc->push_back(detail::ResBlock(ch, out, 0));
        ch = out;
        if (i + 1 < levels) enc->push_back(Conv2d(Conv2dOptions(ch, ch, 3).stride(2).padding(1)));
    }
    enc->push_back(torch::nn::GroupNorm(gn_groups(ch), ch));
    enc->push_back(torch::nn::SiLU());
    enc->push_back(Conv2d(Conv2dOptions(ch, 2 * settings_.latent_channels, 3).padding(1)));
    encoder_ = register_module("encoder", enc);

    torch::nn::Sequential dec;
    dec->push_back(Conv2d(Conv2dOptions(settings_.latent_channels, ch, 3).padding(1)));
    for (int64_t i = levels - 1; i >= 0; --i) {
        const int64_t out = settings_.base_channels * mults[i];
        dec->push_back(detail::ResBlock(ch, out, 0));
        ch = out;
        if (i > 0) dec->push_back(detail::Upsample(ch));
    }
    dec->push_back(torch::nn::GroupNorm(gn_groups(ch), ch));
    dec->push_back(torch::nn::SiLU());
    dec->push_back(Conv2d(Conv2dOptions(ch, 3, 3).padding(1)));
    decoder_ = register_module("decoder", dec);

    {
        // start the posterior near-deterministic; unit-variance latent noise
        // buries the signal for most of a short training budget
        torch::NoGradGuard ng;
        auto* head = encoder_->ptr(encoder_->size() - 1)->as<torch::nn::Conv2dImpl>();
        head->bias.slice(0, settings_.latent_channels, 2 * settings_.latent_channels).fill_(-6.0);
    }

    scaling_factor_ = register_buffer(
        "scaling_factor", torch::tensor(settings_.scaling_factor, torch::kFloat64));
}

void LatentCodecImpl::set_scaling_factor(double s) {
    if (s <= 0.0) throw ParamError("codec: scaling_factor must be positive");
    scaling_factor_.fill_(s);
    settings_.scaling_factor = s;
}

namespace {

torch::Tensor batched(const torch::Tensor& t, bool& was_3d) {
    was_3d = t.dim() == 3;
    return was_3d ? t.unsqueeze(0) : t;
}

}  // namespace

Posterior LatentCodecImpl::encode_posterior(const torch::Tensor& image) {
    bool was_3d = false;
    torch::Tensor x = batched(image, was_3d);
    if (x.dim() != 4 || x.size(1) != 3) throw ParamError("codec encode: expected 3-channel image");
    const int64_t f = settings_.downsample_factor;
    if (x.size(2) % f != 0 || x.size(3) % f != 0)
        throw ParamError("codec encode: spatial dims must be divisible by the downsample factor");

    torch::Tensor moments = encoder_->forward(x);
    auto chunks = moments.chunk(2, 1);
    Posterior p;
    p.mean = was_3d ? chunks[0].squeeze(0) : chunks[0];
    p.logvar = (was_3d ? chunks[1].squeeze(0) : chunks[1]).clamp(-30.0, 20.0);
    return p;
}

torch::Tensor LatentCodecImpl::encode(const torch::Tensor& image, torch::Generator* gen) {
    Posterior p = encode_posterior(image);
    torch::Tensor z = p.mean;
    if (gen != nullptr) {
        torch::Tensor eps = torch::randn(p.mean.sizes(), *gen, p.mean.options());
        z = p.mean + (0.5 * p.logvar).exp() * eps;
    }
    return z * scaling_factor_.to(z.scalar_type());
}

torch::Tensor LatentCodecImpl::decode_raw(const torch::Tensor& latent) {
    bool was_3d = false;
    torch::Tensor z = batched(latent, was_3d);
    if (z.dim() != 4 || z.size(1) != settings_.latent_channels)
        throw ParamError("codec decode: latent channel mismatch");
    torch::Tensor x = decoder_->forward(z / scaling_factor_.to(z.scalar_type()));
    return was_3d ? x.squeeze(0) : x;
}

torch::Tensor LatentCodecImpl::decode(const torch::Tensor& latent) {
    return decode_raw(latent).clamp(-1.0, 1.0);
}

CodecTrainResult train_codec(LatentCodec& codec, const std::vector<torch::Tensor>& images,
                             const CodecTrainConfig& config) {
    if (images.empty()) throw ParamError("train_codec: empty dataset");
    if (config.steps < 0 || config.batch_size < 1) throw ParamError("train_codec: bad config");

    torch::optim::Adam opt(codec->parameters(),
                           torch::optim::AdamOptions(config.lr)
                               .betas({config.adam_beta1, config.adam_beta2}));
    const double kl_weight = codec->settings().kl_weight;
    const int64_t n = static_cast<int64_t>(images.size());

    // bucket by canvas size; steps cycle buckets with the batch scaled down
    // as area grows, so every step touches a similar pixel count
    std::vector<std::pair<int64_t, int64_t>> sizes;
    std::vector<std::vector<int64_t>> buckets;
    for (int64_t i = 0; i < n; ++i) {
        const std::pair<int64_t, int64_t> hw{images[i].size(-2), images[i].size(-1)};
        auto it = std::find(sizes.begin(), sizes.end(), hw);
        if (it == sizes.end()) {
            sizes.push_back(hw);
            buckets.emplace_back();
            it = sizes.end() - 1;
        }
        buckets[static_cast<size_t>(it - sizes.begin())].push_back(i);
    }
    double min_area = static_cast<double>(sizes[0].first * sizes[0].second);
    for (const auto& [h, w] : sizes) min_area = std::min(min_area, static_cast<double>(h * w));

    // visit buckets in proportion to how many images they hold
    std::vector<size_t> schedule;
    size_t smallest = 0;
    for (size_t b = 0; b < buckets.size(); ++b) {
        const auto reps = std::max<int64_t>(
            1, std::llround(8.0 * static_cast<double>(buckets[b].size()) / static_cast<double>(n)));
        schedule.insert(schedule.end(), static_cast<size_t>(reps), b);
        if (sizes[b].first * sizes[b].second < sizes[smallest].first * sizes[smallest].second)
            smallest = b;
    }
    // converge on the smallest canvas first; mixing canvases from step one
    // keeps the loss from settling at all
    const int64_t mix_start = buckets.size() > 1 ? (config.steps * 3) / 5 : 0;

    CodecTrainResult result;
    result.losses.reserve(config.steps);
    codec->train();
    for (int64_t step = 0; step < config.steps; ++step) {
        if (config.steps >= 8 && step == (config.steps * 3) / 4)
            for (auto& group : opt.param_groups())
                static_cast<torch::optim::AdamOptions&>(group.options()).lr(config.lr * 0.2);

        torch::Generator gen = make_generator(derive_seed(config.seed, "codec_step", step));
        const size_t which = step < mix_start
                                 ? smallest
                                 : schedule[static_cast<size_t>(step - mix_start) % schedule.size()];
        const std::vector<int64_t>& bucket = buckets[which];
        const double area = static_cast<double>(sizes[which].first * sizes[which].second);
        const int64_t bs =
            std::clamp<int64_t>(std::llround(config.batch_size * min_area / area),
                                std::min<int64_t>(2, config.batch_size), config.batch_size);
        torch::Tensor idx = torch::randint(0, static_cast<int64_t>(bucket.size()), {bs}, gen,
                                           torch::TensorOptions(torch::kLong));
        std::vector<torch::Tensor> picks;
        picks.reserve(bs);
        for (int64_t b = 0; b < bs; ++b)
            picks.push_back(images[static_cast<size_t>(
                bucket[static_cast<size_t>(idx[b].item<int64_t>())])]);
        torch::Tensor x = to_signed(torch::stack(picks, 0));

        Posterior p = codec->encode_posterior(x);
        torch::Tensor eps = torch::randn(p.mean.sizes(), gen, p.mean.options());
        torch::Tensor z = p.mean + (0.5 * p.logvar).exp() * eps;
        torch::Tensor recon =
            codec->decode_raw(z * codec->settings().scaling_factor);  // scaling cancels, kept for the contract path
        torch::Tensor rec_loss = torch::mse_loss(recon, x);
        torch::Tensor kl =
            -0.5 * (1.0 + p.logvar - p.mean.pow(2) - p.logvar.exp()).sum({1, 2, 3}).mean();
        torch::Tensor loss = rec_loss + kl_weight * kl;

        const double lv = loss.item<double>();
        if (!std::isfinite(lv))
            throw TrainingError("train_codec: non-finite loss at step " + std::to_string(step));
        opt.zero_grad();
        loss.backward();
        opt.step();
        result.losses.push_back(lv);
    }
    codec->eval();

    // scaling so latents reach the diffusion stage near unit variance
    torch::NoGradGuard ng;
    std::vector<torch::Tensor> means;
    for (size_t which = 0; which < buckets.size(); ++which) {
        const std::vector<int64_t>& bucket = buckets[which];
        const double area = static_cast<double>(sizes[which].first * sizes[which].second);
        const size_t chunk =
            std::max<size_t>(8, static_cast<size_t>(std::llround(64.0 * min_area / area)));
        for (size_t i = 0; i < bucket.size(); i += chunk) {
            std::vector<torch::Tensor> part;
            for (size_t j = i; j < std::min(bucket.size(), i + chunk); ++j)
                part.push_back(images[static_cast<size_t>(bucket[j])]);
            means.push_back(
                codec->encode_posterior(to_signed(torch::stack(part, 0))).mean.reshape(-1));
        }
    }
    const double latent_std = torch::cat(means, 0).std().item<double>();
    if (latent_std > 0.0 && std::isfinite(latent_std))
        codec->set_scaling_factor(1.0 / latent_std);
    result.final_scaling_factor = codec->scaling_factor();
    return result;
}

double reconstruction_error(const std::vector<torch::Tensor>& images, LatentCodec& codec,
                            int64_t resolution) {
    if (images.empty()) throw ParamError("reconstruction_error: empty batch");
    if (resolution < codec->settings().downsample_factor ||
        resolution % codec->settings().downsample_factor != 0)
        throw ParamError("reconstruction_error: resolution incompatible with the codec");

    torch::NoGradGuard ng;
    double total = 0.0;
    for (const auto& img : images) {
        torch::Tensor base = resize_bicubic(img, resolution, resolution).clamp(0.0, 1.0);
        torch::Tensor round_trip = to_unit(codec->decode(codec->encode(to_signed(base))));
        torch::Tensor a = resize_bicubic(base, 256, 256).clamp(0.0, 1.0) * 255.0;
        torch::Tensor b = resize_bicubic(round_trip, 256, 256).clamp(0.0, 1.0) * 255.0;
        total += mse(b, a);
    }
    return total / static_cast<double>(images.size());
}

}  // namespace harmony
