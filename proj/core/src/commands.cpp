#include "harmony/commands.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "harmony/checkpoint.hpp"
#include "harmony/dataset.hpp"
#include "harmony/errors.hpp"
#include "harmony/image.hpp"
#include "harmony/metrics.hpp"
#include "harmony/pipeline.hpp"
#include "harmony/rng.hpp"
#include "harmony/training.hpp"

namespace fs = std::filesystem;

namespace harmony {

namespace {

std::string resolved_data_root(const RunConfig& config) {
    std::string root = config.data_root;
    if (root.empty())
        if (const char* env = std::getenv("HARMONY_DATA_ROOT"); env && *env) root = env;
    if (root.empty())
        throw ConfigError(
            "data root not set: put data_root in the config or set HARMONY_DATA_ROOT");
    return root;
}

std::string existing_data_root(const RunConfig& config) {
    const std::string root = resolved_data_root(config);
    if (!fs::exists(root)) throw ConfigError("data root does not exist: " + root);
    return root;
}

std::string ckpt_path(const std::string& configured, const RunConfig& config,
                      const char* default_name) {
    if (!configured.empty()) return configured;
    return (fs::path(config.output_dir) / default_name).string();
}

std::string codec_ckpt_path(const RunConfig& c) {
    return ckpt_path(c.codec_checkpoint, c, "codec.ckpt");
}
std::string harmony_ckpt_path(const RunConfig& c) {
    return ckpt_path(c.harmony_checkpoint, c, "harmony.ckpt");
}
std::string refiner_ckpt_path(const RunConfig& c) {
    return ckpt_path(c.refiner_checkpoint, c, "refiner.ckpt");
}

void ensure_parent(const std::string& path) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

std::map<std::string, torch::Tensor> strip_prefix(const std::map<std::string, torch::Tensor>& t,
                                                  const std::string& prefix) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& [k, v] : t)
        if (k.rfind(prefix, 0) == 0) out.emplace(k.substr(prefix.size()), v);
    return out;
}

LatentCodec load_codec_model(const RunConfig& config) {
    const std::string path = codec_ckpt_path(config);
    if (!fs::exists(path))
        throw DataError("codec checkpoint missing: " + path + " (run train-codec first)");
    Checkpoint ck = load_checkpoint(path);
    CodecSettings settings = config.codec;
    if (ck.meta.contains("codec")) ck.meta.at("codec").get_to(settings);
    LatentCodec codec(settings);
    load_state_tensors(*codec, ck.tensors, true);
    codec->eval();
    return codec;
}

// EMA weights when present; the raw weights stay in the file for resuming.
ConditionalDenoiser load_denoiser_for_eval(const RunConfig& config, NoiseSchedule* schedule_out) {
    const std::string path = harmony_ckpt_path(config);
    if (!fs::exists(path))
        throw DataError("harmonization checkpoint missing: " + path +
                        " (run train-harmony first)");
    Checkpoint ck = load_checkpoint(path);
    DenoiserSettings settings = config.denoiser;
    if (ck.meta.contains("denoiser")) ck.meta.at("denoiser").get_to(settings);
    ConditionalDenoiser model(settings);
    load_state_tensors(*model, strip_prefix(ck.tensors, "model."), true);
    auto ema_tensors = strip_prefix(ck.tensors, "ema.");
    if (!ema_tensors.empty()) {
        Ema ema = Ema::from_tensors(ema_tensors,
                                    ck.meta.value("ema_decay", config.train.ema_decay));
        ema.copy_to(*model);
    }
    model->eval();
    if (schedule_out)
        *schedule_out =
            build_schedule(ck.meta.value("num_train_timesteps", config.num_train_timesteps),
                           ck.meta.value("beta_start", config.beta_start),
                           ck.meta.value("beta_end", config.beta_end));
    return model;
}

Refiner load_refiner_model(const RunConfig& config) {
    const std::string path = refiner_ckpt_path(config);
    if (!fs::exists(path))
        throw DataError("refiner checkpoint missing: " + path +
                        " (run train-refine first or pass --no-refine)");
    Checkpoint ck = load_checkpoint(path);
    RefinerSettings settings = config.refiner;
    if (ck.meta.contains("refiner")) ck.meta.at("refiner").get_to(settings);
    Refiner model(settings);
    load_state_tensors(*model, strip_prefix(ck.tensors, "model."), true);
    auto ema_tensors = strip_prefix(ck.tensors, "ema.");
    if (!ema_tensors.empty()) {
        Ema ema = Ema::from_tensors(ema_tensors,
                                    ck.meta.value("ema_decay", config.refiner_train.ema_decay));
        ema.copy_to(*model);
    }
    model->eval();
    return model;
}

PipelineModels load_pipeline_models(const RunConfig& config) {
    PipelineModels models;
    models.codec = load_codec_model(config);
    models.denoiser = load_denoiser_for_eval(config, &models.schedule);
    return models;
}

int64_t test_limit(const RunConfig& config, size_t test_size) {
    const auto n = static_cast<int64_t>(test_size);
    return config.eval_limit > 0 ? std::min(config.eval_limit, n) : n;
}

// Pre-encoded latents for both flip orientations; valid only for flip-only
// augmentation, which is what the toy preset uses.
struct LatentCache {
    torch::Tensor real;  // N,2,C,h,w
    torch::Tensor comp;  // N,2,C,h,w
    torch::Tensor mask;  // N,2,1,h,w
    std::vector<std::string> ids;
};

LatentCache build_latent_cache(const std::vector<HarmonySample>& samples, LatentCodec& codec,
                               int64_t resolution, int64_t latent_res) {
    torch::NoGradGuard ng;
    LatentCache cache;
    std::vector<torch::Tensor> real_chunks, comp_chunks, mask_rows;
    const size_t chunk = 32;
    for (size_t start = 0; start < samples.size(); start += chunk) {
        const size_t stop = std::min(start + chunk, samples.size());
        std::vector<torch::Tensor> reals, comps;
        for (size_t i = start; i < stop; ++i) {
            SampleImages imgs = load_sample(samples[i]);
            torch::Tensor real =
                resize_bicubic(imgs.real, resolution, resolution).clamp(0.0, 1.0);
            torch::Tensor comp =
                resize_bicubic(imgs.composite, resolution, resolution).clamp(0.0, 1.0);
            torch::Tensor mask = resize_nearest(imgs.mask, resolution, resolution);
            reals.push_back(real);
            reals.push_back(real.flip({2}));
            comps.push_back(comp);
            comps.push_back(comp.flip({2}));
            mask_rows.push_back(torch::stack({resize_nearest(mask, latent_res, latent_res),
                                              resize_nearest(mask.flip({2}), latent_res,
                                                             latent_res)}));
            cache.ids.push_back(samples[i].id);
        }
        real_chunks.push_back(codec->encode(to_signed(torch::stack(reals))));
        comp_chunks.push_back(codec->encode(to_signed(torch::stack(comps))));
        if (start == 0 || (start / chunk) % 10 == 0)
            std::cout << "  encoding latents " << stop << "/" << samples.size() << "\r"
                      << std::flush;
    }
    const auto n = static_cast<int64_t>(samples.size());
    const int64_t c = real_chunks.front().size(1);
    cache.real = torch::cat(real_chunks).view({n, 2, c, latent_res, latent_res});
    cache.comp = torch::cat(comp_chunks).view({n, 2, c, latent_res, latent_res});
    cache.mask = torch::stack(mask_rows);
    std::cout << "  encoded latents for " << n << " samples        " << std::endl;
    return cache;
}

}  // namespace

void cmd_make_synthetic(const RunConfig& config) {
    const std::string root = resolved_data_root(config);
    fs::create_directories(root);
    echo_config(config, config.output_dir);
    const int64_t want = config.synthetic.train_count + config.synthetic.test_count;
    const int64_t base_count = std::clamp<int64_t>(want / 32, 8, 256);
    std::cout << "generating " << base_count << " procedural base images" << std::endl;
    auto bases = make_procedural_bases(base_count, config.synthetic.resolution,
                                       derive_seed(config.synthetic.seed, "bases"));
    SplitManifest manifest = make_synthetic_set(bases, root, config.synthetic);
    std::cout << "synthetic set: " << manifest.train.size() << " train, " << manifest.test.size()
              << " test -> " << (fs::path(root) / "synthetic").string() << std::endl;
}

void cmd_train_codec(const RunConfig& config) {
    const std::string root = existing_data_root(config);
    echo_config(config, config.output_dir);
    SplitManifest manifest = load_iharmony4(root);
    if (manifest.train.empty()) throw DataError("train-codec: no training samples under " + root);

    torch::Generator gen = make_generator(derive_seed(config.codec_train.seed, "codec_data"));
    torch::Tensor order = torch::randperm(static_cast<int64_t>(manifest.train.size()), gen);
    const int64_t res = config.augment.resolution;
    const auto max_images = static_cast<size_t>(config.codec_train.max_images);
    std::vector<torch::Tensor> images;
    images.reserve(max_images);
    // cycle canvas size and content magnification: inference hands the codec
    // canvases well beyond the training grid, so cover a spread of both
    std::vector<int64_t> canvases{res};
    while (canvases.size() < 3 && canvases.back() * 2 <= std::min<int64_t>(512, res * 4))
        canvases.push_back(canvases.back() * 2);
    auto variant = [&](const torch::Tensor& img, int64_t canvas, int64_t m) {
        torch::Tensor base = resize_bicubic(img, canvas / m, canvas / m).clamp(0.0, 1.0);
        return m == 1 ? base : resize_bicubic(base, canvas, canvas).clamp(0.0, 1.0);
    };
    const auto n_canvas = static_cast<int64_t>(canvases.size());
    for (int64_t i = 0; i < order.numel() && images.size() < max_images; ++i) {
        const HarmonySample& s = manifest.train[static_cast<size_t>(order[i].item<int64_t>())];
        const int64_t canvas = canvases[static_cast<size_t>(i % n_canvas)];
        const int64_t m = (i / n_canvas) % 2 == 0 ? 1 : 2;
        SampleImages imgs = load_sample(s);
        images.push_back(variant(imgs.real, canvas, m));
        if (images.size() < max_images) images.push_back(variant(imgs.composite, canvas, m));
    }
    std::cout << "codec training set: " << images.size() << " images at " << canvases.front()
              << "-" << canvases.back() << "px" << std::endl;

    LatentCodec codec(config.codec);
    CodecTrainResult result = train_codec(codec, images, config.codec_train);

    std::vector<torch::Tensor> probe;
    for (size_t i = 0; i < manifest.test.size() && probe.size() < 32; ++i)
        probe.push_back(load_sample(manifest.test[i]).real);
    const double recon = probe.empty() ? 0.0 : reconstruction_error(probe, codec, res);

    CodecSettings saved = codec->settings();
    saved.scaling_factor = codec->scaling_factor();
    nlohmann::json meta{{"kind", "codec"},
                        {"codec", saved},
                        {"steps", config.codec_train.steps},
                        {"final_loss", result.losses.empty() ? 0.0 : result.losses.back()},
                        {"test_recon_mse", recon}};
    const std::string path = codec_ckpt_path(config);
    ensure_parent(path);
    save_checkpoint(path, state_tensors(*codec), meta);
    std::cout << "codec: scaling_factor " << result.final_scaling_factor << ", held-out recon "
              << psnr_from_mse(recon) << " dB -> " << path << std::endl;
}

void cmd_train_harmony(const RunConfig& config) {
    const std::string root = existing_data_root(config);
    echo_config(config, config.output_dir);
    SplitManifest manifest = load_iharmony4(root);
    if (manifest.train.empty())
        throw DataError("train-harmony: no training samples under " + root);

    LatentCodec codec = load_codec_model(config);
    NoiseSchedule schedule =
        build_schedule(config.num_train_timesteps, config.beta_start, config.beta_end);

    const std::string path = harmony_ckpt_path(config);
    DenoiserSettings dsettings = config.denoiser;
    Checkpoint resume;
    const bool resuming = fs::exists(path);
    if (resuming) {
        resume = load_checkpoint(path);
        if (resume.meta.contains("denoiser")) resume.meta.at("denoiser").get_to(dsettings);
    }

    ConditionalDenoiser model(dsettings);
    torch::optim::Adam opt(model->parameters(),
                           torch::optim::AdamOptions(config.train.lr_phase1)
                               .betas({config.train.adam_beta1, config.train.adam_beta2}));
    Ema ema(*model, config.train.ema_decay);
    int64_t step = 0;
    if (resuming) {
        load_state_tensors(*model, strip_prefix(resume.tensors, "model."), true);
        load_optimizer_state(opt, strip_prefix(resume.tensors, "adam."));
        ema = Ema::from_tensors(strip_prefix(resume.tensors, "ema."), config.train.ema_decay);
        step = resume.meta.value("step", int64_t{0});
        std::cout << "resuming from step " << step << std::endl;
    }
    const int64_t total = config.train.total_steps();
    if (step >= total) {
        std::cout << "harmony model already trained to step " << step << std::endl;
        return;
    }

    const int64_t res = config.train.train_resolution;
    const int64_t latent_res = res / codec->settings().downsample_factor;
    const bool cacheable =
        config.augment.crop_scale_min == 1.0 && config.augment.crop_scale_max == 1.0 &&
        config.augment.aspect_min == 1.0 && config.augment.aspect_max == 1.0;

    LatentCache cache;
    DiffusionBatchFn next_batch;
    const int64_t batch = config.train.batch_size;
    if (cacheable) {
        cache = build_latent_cache(manifest.train, codec, res, latent_res);
        const auto n = static_cast<int64_t>(cache.ids.size());
        next_batch = [&, n, batch](int64_t, torch::Generator& g) {
            torch::Tensor pick = torch::randint(0, n, {batch}, g);
            torch::Tensor flip =
                (torch::rand({batch}, g) < config.augment.flip_p).to(torch::kLong);
            DiffusionBatch b;
            b.gt_latent = cache.real.index({pick, flip});
            b.composite_latent = cache.comp.index({pick, flip});
            b.mask_lowres = cache.mask.index({pick, flip});
            for (int64_t i = 0; i < batch; ++i)
                b.ids.push_back(cache.ids[static_cast<size_t>(pick[i].item<int64_t>())]);
            return b;
        };
    } else {
        const auto n = static_cast<int64_t>(manifest.train.size());
        next_batch = [&, n, batch](int64_t, torch::Generator& g) {
            torch::NoGradGuard ng;
            torch::Tensor pick = torch::randint(0, n, {batch}, g);
            std::vector<torch::Tensor> reals, comps, masks;
            DiffusionBatch b;
            for (int64_t i = 0; i < batch; ++i) {
                const HarmonySample& s =
                    manifest.train[static_cast<size_t>(pick[i].item<int64_t>())];
                SampleImages aug = augment(load_sample(s), config.augment, g);
                reals.push_back(aug.real);
                comps.push_back(aug.composite);
                masks.push_back(resize_nearest(aug.mask, latent_res, latent_res));
                b.ids.push_back(s.id);
            }
            b.gt_latent = codec->encode(to_signed(torch::stack(reals)));
            b.composite_latent = codec->encode(to_signed(torch::stack(comps)));
            b.mask_lowres = torch::stack(masks);
            return b;
        };
    }

    auto save_state = [&](int64_t at_step, const Ema& cur) {
        std::map<std::string, torch::Tensor> t;
        for (auto& [k, v] : state_tensors(*model)) t.emplace("model." + k, v);
        for (auto& [k, v] : cur.to_tensors()) t.emplace("ema." + k, v);
        for (auto& [k, v] : optimizer_state_tensors(opt)) t.emplace("adam." + k, v);
        nlohmann::json meta{{"kind", "harmony"},
                            {"step", at_step},
                            {"denoiser", dsettings},
                            {"num_train_timesteps", config.num_train_timesteps},
                            {"beta_start", config.beta_start},
                            {"beta_end", config.beta_end},
                            {"ema_decay", config.train.ema_decay}};
        ensure_parent(path);
        save_checkpoint(path, t, meta);
    };

    StepCallback progress = [&](int64_t s, double loss, double lr) {
        if (s % config.train.log_every == 0 || s == total - 1)
            std::cout << "step " << s << "/" << total << " loss " << loss << " lr " << lr
                      << std::endl;
    };

    while (step < total) {
        const int64_t end = config.train.checkpoint_every > 0
                                ? std::min(total, step + config.train.checkpoint_every)
                                : total;
        DiffusionTrainResult r = train_diffusion(model, schedule, next_batch, config.train, opt,
                                                 std::move(ema), step, progress, end);
        ema = std::move(r.ema);
        step = r.final_step;
        save_state(step, ema);
    }
    std::cout << "harmony model: " << total << " steps -> " << path << std::endl;
}

void cmd_train_refine(const RunConfig& config) {
    const std::string root = existing_data_root(config);
    echo_config(config, config.output_dir);
    SplitManifest manifest = load_iharmony4(root);
    if (manifest.train.empty()) throw DataError("train-refine: no training samples under " + root);

    const std::string tuples_path = (fs::path(config.output_dir) / "refiner_tuples.ckpt").string();
    if (!fs::exists(tuples_path)) {
        std::cout << "building stage-1 tuple set" << std::endl;
        PipelineModels models = load_pipeline_models(config);
        const auto n = static_cast<int64_t>(manifest.train.size());
        torch::Generator g = make_generator(derive_seed(config.refiner_train.seed, "tuple_pick"));
        torch::Tensor order = torch::randperm(n, g);
        const int64_t count =
            config.refiner_tuple_count > 0 ? std::min(config.refiner_tuple_count, n) : n;
        const int64_t variants = config.refiner_seed_variants;
        const int64_t res = config.inference_resolution;
        torch::Tensor store = torch::empty({count * variants, 3, res, res});
        torch::Tensor sample_index = torch::empty({count * variants}, torch::kLong);
        for (int64_t i = 0; i < count; ++i) {
            const auto si = order[i].item<int64_t>();
            SampleImages imgs = load_sample(manifest.train[static_cast<size_t>(si)]);
            for (int64_t v = 0; v < variants; ++v) {
                HarmonizationRequest req;
                req.composite = imgs.composite;
                req.mask = imgs.mask;
                req.inference_resolution = res;
                req.output_resolution = res;  // stored raw, upscaled at train time
                req.sampler = config.sampler;
                req.sampler.seed = derive_seed(config.refiner_train.seed, "tuple",
                                               static_cast<uint64_t>(i * variants + v));
                req.blend_background = config.blend_background;
                const int64_t row = i * variants + v;
                store[row] = harmonize(req, models);
                sample_index[row] = si;
            }
            if (i % 100 == 0)
                std::cout << "  stage-1 tuples " << i << "/" << count << "\r" << std::flush;
        }
        std::cout << "  stage-1 tuples " << count << "/" << count << "  " << std::endl;
        nlohmann::json meta{{"kind", "refiner_tuples"},
                            {"count", count},
                            {"variants", variants},
                            {"resolution", res}};
        ensure_parent(tuples_path);
        save_checkpoint(tuples_path, {{"harmonized", store}, {"sample_index", sample_index}},
                        meta);
    }

    Checkpoint tuples = load_checkpoint(tuples_path);
    torch::Tensor harm = tuples.tensors.at("harmonized");
    torch::Tensor sample_index = tuples.tensors.at("sample_index");
    const int64_t rows = harm.size(0);
    std::cout << "tuple set: " << rows << " stage-1 outputs" << std::endl;

    const std::string path = refiner_ckpt_path(config);
    RefinerSettings rsettings = config.refiner;
    Checkpoint resume;
    const bool resuming = fs::exists(path);
    if (resuming) {
        resume = load_checkpoint(path);
        if (resume.meta.contains("refiner")) resume.meta.at("refiner").get_to(rsettings);
    }

    Refiner model(rsettings);
    torch::optim::Adam opt(
        model->parameters(),
        torch::optim::AdamOptions(config.refiner_train.lr_phase1)
            .betas({config.refiner_train.adam_beta1, config.refiner_train.adam_beta2}));
    Ema ema(*model, config.refiner_train.ema_decay);
    int64_t step = 0;
    if (resuming) {
        load_state_tensors(*model, strip_prefix(resume.tensors, "model."), true);
        load_optimizer_state(opt, strip_prefix(resume.tensors, "adam."));
        ema = Ema::from_tensors(strip_prefix(resume.tensors, "ema."),
                                config.refiner_train.ema_decay);
        step = resume.meta.value("step", int64_t{0});
        std::cout << "resuming from step " << step << std::endl;
    }
    const int64_t total = config.refiner_train.total_steps();
    if (step >= total) {
        std::cout << "refiner already trained to step " << step << std::endl;
        return;
    }

    const int64_t batch = config.refiner_train.batch_size;
    RefinerBatchFn next_batch = [&](int64_t, torch::Generator& g) {
        torch::Tensor pick = torch::randint(0, rows, {batch}, g);
        torch::Tensor flip = torch::rand({batch}, g) < 0.5;
        std::vector<torch::Tensor> hs, cs, ms, gts;
        RefinerBatch b;
        for (int64_t i = 0; i < batch; ++i) {
            const auto row = pick[i].item<int64_t>();
            const auto si = static_cast<size_t>(sample_index[row].item<int64_t>());
            SampleImages imgs = load_sample(manifest.train[si]);
            torch::Tensor h =
                resize_bicubic(harm[row], kRefineResolution, kRefineResolution).clamp(0.0, 1.0);
            torch::Tensor c = resize_bicubic(imgs.composite, kRefineResolution, kRefineResolution)
                                  .clamp(0.0, 1.0);
            torch::Tensor m = resize_nearest(imgs.mask, kRefineResolution, kRefineResolution);
            torch::Tensor gt =
                resize_bicubic(imgs.real, kRefineResolution, kRefineResolution).clamp(0.0, 1.0);
            if (flip[i].item<bool>()) {
                h = h.flip({2});
                c = c.flip({2});
                m = m.flip({2});
                gt = gt.flip({2});
            }
            hs.push_back(to_signed(h));
            cs.push_back(to_signed(c));
            ms.push_back(m);
            gts.push_back(to_signed(gt));
            b.ids.push_back(manifest.train[si].id);
        }
        b.harmonized = torch::stack(hs);
        b.composite = torch::stack(cs);
        b.mask = torch::stack(ms);
        b.gt = torch::stack(gts);
        return b;
    };

    auto save_state = [&](int64_t at_step, const Ema& cur) {
        std::map<std::string, torch::Tensor> t;
        for (auto& [k, v] : state_tensors(*model)) t.emplace("model." + k, v);
        for (auto& [k, v] : cur.to_tensors()) t.emplace("ema." + k, v);
        for (auto& [k, v] : optimizer_state_tensors(opt)) t.emplace("adam." + k, v);
        nlohmann::json meta{{"kind", "refiner"},
                            {"step", at_step},
                            {"refiner", rsettings},
                            {"ema_decay", config.refiner_train.ema_decay}};
        ensure_parent(path);
        save_checkpoint(path, t, meta);
    };

    StepCallback progress = [&](int64_t s, double loss, double lr) {
        if (s % config.refiner_train.log_every == 0 || s == total - 1)
            std::cout << "step " << s << "/" << total << " loss " << loss << " lr " << lr
                      << std::endl;
    };

    while (step < total) {
        const int64_t end = config.refiner_train.checkpoint_every > 0
                                ? std::min(total, step + config.refiner_train.checkpoint_every)
                                : total;
        RefinerTrainResult r = train_refiner(model, next_batch, config.refiner_train, opt,
                                             std::move(ema), step, progress, end);
        ema = std::move(r.ema);
        step = r.final_step;
        save_state(step, ema);
    }
    std::cout << "refiner: " << total << " steps -> " << path << std::endl;
}

void cmd_infer(const RunConfig& config, const std::string& input_dir) {
    const std::string root = input_dir.empty() ? existing_data_root(config) : input_dir;
    SplitManifest manifest = load_iharmony4(root);
    if (manifest.test.empty()) throw DataError("infer: no test samples under " + root);
    echo_config(config, config.output_dir);

    PipelineModels models = load_pipeline_models(config);
    Refiner refiner{nullptr};
    if (config.use_refiner) refiner = load_refiner_model(config);

    const fs::path pred_dir = fs::path(config.output_dir) / "predictions";
    fs::create_directories(pred_dir);
    const int64_t limit = test_limit(config, manifest.test.size());
    nlohmann::json items = nlohmann::json::array();
    for (int64_t i = 0; i < limit; ++i) {
        const HarmonySample& s = manifest.test[static_cast<size_t>(i)];
        SampleImages imgs = load_sample(s);
        HarmonizationRequest req;
        req.composite = imgs.composite;
        req.mask = imgs.mask;
        req.inference_resolution = config.inference_resolution;
        req.output_resolution = config.output_resolution;
        req.sampler = config.sampler;
        req.sampler.seed = config.sampler.seed + static_cast<uint64_t>(i);
        req.blend_background = config.blend_background;
        torch::Tensor out = harmonize_refined(req, models, &refiner);
        const std::string file = s.id + ".png";
        save_image((pred_dir / file).string(), out);
        items.push_back({{"id", s.id},
                         {"file", file},
                         {"seed", req.sampler.seed},
                         {"subset", s.subset}});
        if (i % 25 == 0 || i == limit - 1)
            std::cout << "harmonized " << (i + 1) << "/" << limit << "\r" << std::flush;
    }
    std::cout << std::endl;

    nlohmann::json manifest_json{{"count", items.size()},
                                 {"sampler", config.sampler},
                                 {"refined", config.use_refiner},
                                 {"items", items}};
    std::ofstream mf(fs::path(config.output_dir) / "manifest.json");
    mf << manifest_json.dump(2) << "\n";
    std::cout << "predictions -> " << pred_dir.string() << std::endl;
}

void cmd_evaluate(const RunConfig& config, const std::string& pred_dir) {
    const std::string root = existing_data_root(config);
    SplitManifest manifest = load_iharmony4(root);
    if (manifest.test.empty()) throw DataError("evaluate: no test samples under " + root);
    echo_config(config, config.output_dir);

    const int64_t limit = test_limit(config, manifest.test.size());
    MetricOptions mopts{256, config.metrics_round_to_int};
    std::vector<EvalRecord> records;

    if (!pred_dir.empty()) {
        for (int64_t i = 0; i < limit; ++i) {
            const HarmonySample& s = manifest.test[static_cast<size_t>(i)];
            SampleImages imgs = load_sample(s);
            const fs::path p = fs::path(pred_dir) / (s.id + ".png");
            if (!fs::exists(p))
                throw DataError("evaluate: missing prediction " + p.string());
            torch::Tensor pred = load_image(p.string());
            records.push_back(evaluate_sample(pred, imgs.real, imgs.mask, s.id, s.subset,
                                              s.foreground_ratio, 0, mopts));
        }
    } else {
        PipelineModels models = load_pipeline_models(config);
        Refiner refiner{nullptr};
        if (config.use_refiner) refiner = load_refiner_model(config);
        for (int64_t seed_i = 0; seed_i < config.seeds; ++seed_i) {
            const uint64_t base = config.sampler.seed + static_cast<uint64_t>(seed_i);
            for (int64_t i = 0; i < limit; ++i) {
                const HarmonySample& s = manifest.test[static_cast<size_t>(i)];
                SampleImages imgs = load_sample(s);
                HarmonizationRequest req;
                req.composite = imgs.composite;
                req.mask = imgs.mask;
                req.inference_resolution = config.inference_resolution;
                req.output_resolution = config.output_resolution;
                req.sampler = config.sampler;
                req.sampler.seed = derive_seed(base, "eval_item", static_cast<uint64_t>(i));
                req.blend_background = config.blend_background;
                torch::Tensor out = harmonize_refined(req, models, &refiner);
                records.push_back(evaluate_sample(out, imgs.real, imgs.mask, s.id, s.subset,
                                                  s.foreground_ratio, base, mopts));
                if (i % 25 == 0 || i == limit - 1)
                    std::cout << "seed " << (seed_i + 1) << "/" << config.seeds << " sample "
                              << (i + 1) << "/" << limit << "\r" << std::flush;
            }
        }
        std::cout << std::endl;
    }

    EvalReport report = aggregate(records);
    const std::string text = format_report(report);
    std::cout << text;
    std::ofstream(fs::path(config.output_dir) / "report.txt") << text;
    std::ofstream(fs::path(config.output_dir) / "report.csv") << report_csv(report);
    std::ofstream(fs::path(config.output_dir) / "records.csv") << records_csv(records);
    std::cout << "report -> " << (fs::path(config.output_dir) / "report.txt").string()
              << std::endl;
}

void cmd_report_grid(const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs,
                     const std::vector<std::string>& gts, const std::string& out_path) {
    if (inputs.empty() || inputs.size() != outputs.size())
        throw ParamError("report-grid: need matching, non-empty input and output lists");
    if (!gts.empty() && gts.size() != inputs.size())
        throw ParamError("report-grid: ground-truth list length mismatch");

    const int64_t cell = 256, gutter = 2;
    const auto rows = static_cast<int64_t>(inputs.size());
    const int64_t cols = gts.empty() ? 2 : 3;
    torch::Tensor grid = torch::ones(
        {3, rows * cell + (rows - 1) * gutter, cols * cell + (cols - 1) * gutter});
    auto put = [&](int64_t r, int64_t c, const std::string& file) {
        torch::Tensor img = resize_bicubic(load_image(file), cell, cell).clamp(0.0, 1.0);
        grid.slice(1, r * (cell + gutter), r * (cell + gutter) + cell)
            .slice(2, c * (cell + gutter), c * (cell + gutter) + cell)
            .copy_(img);
    };
    for (int64_t r = 0; r < rows; ++r) {
        put(r, 0, inputs[static_cast<size_t>(r)]);
        put(r, 1, outputs[static_cast<size_t>(r)]);
        if (cols == 3) put(r, 2, gts[static_cast<size_t>(r)]);
    }
    ensure_parent(out_path);
    save_image(out_path, grid);
    std::cout << "grid (" << rows << "x" << cols << ") -> " << out_path << std::endl;
}

}  // namespace harmony
