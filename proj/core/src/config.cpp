#include "harmony/config.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>

#include "harmony/errors.hpp"

namespace harmony {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("config: unknown key '" + where + "." + item.key() + "'");
    }
}

template <typename T>
void opt_get(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            j.at(key).get_to(out);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
        }
    }
}

}  // namespace

void from_json(const nlohmann::json& j, CodecSettings& s) {
    check_keys(j,
               {"downsample_factor", "latent_channels", "base_channels", "channel_mults",
                "scaling_factor", "kl_weight"},
               "codec");
    opt_get(j, "downsample_factor", s.downsample_factor);
    opt_get(j, "latent_channels", s.latent_channels);
    opt_get(j, "base_channels", s.base_channels);
    opt_get(j, "channel_mults", s.channel_mults);
    opt_get(j, "scaling_factor", s.scaling_factor);
    opt_get(j, "kl_weight", s.kl_weight);
}

void to_json(nlohmann::json& j, const CodecSettings& s) {
    j = {{"downsample_factor", s.downsample_factor}, {"latent_channels", s.latent_channels},
         {"base_channels", s.base_channels},         {"channel_mults", s.channel_mults},
         {"scaling_factor", s.scaling_factor},       {"kl_weight", s.kl_weight}};
}

void from_json(const nlohmann::json& j, DenoiserSettings& s) {
    check_keys(j,
               {"latent_channels", "base_channels", "channel_mults", "attention_levels",
                "num_res_blocks", "num_heads", "context_length", "context_dim"},
               "denoiser");
    opt_get(j, "latent_channels", s.latent_channels);
    opt_get(j, "base_channels", s.base_channels);
    opt_get(j, "channel_mults", s.channel_mults);
    opt_get(j, "attention_levels", s.attention_levels);
    opt_get(j, "num_res_blocks", s.num_res_blocks);
    opt_get(j, "num_heads", s.num_heads);
    opt_get(j, "context_length", s.context_length);
    opt_get(j, "context_dim", s.context_dim);
}

void to_json(nlohmann::json& j, const DenoiserSettings& s) {
    j = {{"latent_channels", s.latent_channels},
         {"base_channels", s.base_channels},
         {"channel_mults", s.channel_mults},
         {"attention_levels", s.attention_levels},
         {"num_res_blocks", s.num_res_blocks},
         {"num_heads", s.num_heads},
         {"context_length", s.context_length},
         {"context_dim", s.context_dim}};
}

void from_json(const nlohmann::json& j, RefinerSettings& s) {
    check_keys(j, {"base_channels", "num_stages"}, "refiner");
    opt_get(j, "base_channels", s.base_channels);
    opt_get(j, "num_stages", s.num_stages);
}

void to_json(nlohmann::json& j, const RefinerSettings& s) {
    j = {{"base_channels", s.base_channels}, {"num_stages", s.num_stages}};
}

void from_json(const nlohmann::json& j, CodecTrainConfig& s) {
    check_keys(j,
               {"steps", "batch_size", "lr", "adam_beta1", "adam_beta2", "seed", "log_every",
                "max_images"},
               "codec_train");
    opt_get(j, "steps", s.steps);
    opt_get(j, "batch_size", s.batch_size);
    opt_get(j, "lr", s.lr);
    opt_get(j, "adam_beta1", s.adam_beta1);
    opt_get(j, "adam_beta2", s.adam_beta2);
    opt_get(j, "seed", s.seed);
    opt_get(j, "log_every", s.log_every);
    opt_get(j, "max_images", s.max_images);
}

void to_json(nlohmann::json& j, const CodecTrainConfig& s) {
    j = {{"steps", s.steps},
         {"batch_size", s.batch_size},
         {"lr", s.lr},
         {"adam_beta1", s.adam_beta1},
         {"adam_beta2", s.adam_beta2},
         {"seed", s.seed},
         {"log_every", s.log_every},
         {"max_images", s.max_images}};
}

void from_json(const nlohmann::json& j, TrainConfig& s) {
    check_keys(j,
               {"batch_size", "lr_phase1", "phase1_steps", "lr_phase2", "phase2_steps",
                "adam_beta1", "adam_beta2", "ema_decay", "train_resolution", "seed", "log_every",
                "checkpoint_every"},
               "train");
    opt_get(j, "batch_size", s.batch_size);
    opt_get(j, "lr_phase1", s.lr_phase1);
    opt_get(j, "phase1_steps", s.phase1_steps);
    opt_get(j, "lr_phase2", s.lr_phase2);
    opt_get(j, "phase2_steps", s.phase2_steps);
    opt_get(j, "adam_beta1", s.adam_beta1);
    opt_get(j, "adam_beta2", s.adam_beta2);
    opt_get(j, "ema_decay", s.ema_decay);
    opt_get(j, "train_resolution", s.train_resolution);
    opt_get(j, "seed", s.seed);
    opt_get(j, "log_every", s.log_every);
    opt_get(j, "checkpoint_every", s.checkpoint_every);
}

void to_json(nlohmann::json& j, const TrainConfig& s) {
    j = {{"batch_size", s.batch_size},
         {"lr_phase1", s.lr_phase1},
         {"phase1_steps", s.phase1_steps},
         {"lr_phase2", s.lr_phase2},
         {"phase2_steps", s.phase2_steps},
         {"adam_beta1", s.adam_beta1},
         {"adam_beta2", s.adam_beta2},
         {"ema_decay", s.ema_decay},
         {"train_resolution", s.train_resolution},
         {"seed", s.seed},
         {"log_every", s.log_every},
         {"checkpoint_every", s.checkpoint_every}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& s) {
    check_keys(j,
               {"train_count", "test_count", "resolution", "brightness_range", "contrast_range",
                "channel_gain_range", "min_effect", "seed"},
               "synthetic");
    opt_get(j, "train_count", s.train_count);
    opt_get(j, "test_count", s.test_count);
    opt_get(j, "resolution", s.resolution);
    opt_get(j, "brightness_range", s.brightness_range);
    opt_get(j, "contrast_range", s.contrast_range);
    opt_get(j, "channel_gain_range", s.channel_gain_range);
    opt_get(j, "min_effect", s.min_effect);
    opt_get(j, "seed", s.seed);
}

void to_json(nlohmann::json& j, const SyntheticConfig& s) {
    j = {{"train_count", s.train_count},
         {"test_count", s.test_count},
         {"resolution", s.resolution},
         {"brightness_range", s.brightness_range},
         {"contrast_range", s.contrast_range},
         {"channel_gain_range", s.channel_gain_range},
         {"min_effect", s.min_effect},
         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, AugmentConfig& s) {
    check_keys(j,
               {"crop_scale_min", "crop_scale_max", "aspect_min", "aspect_max", "flip_p",
                "resolution"},
               "augment");
    opt_get(j, "crop_scale_min", s.crop_scale_min);
    opt_get(j, "crop_scale_max", s.crop_scale_max);
    opt_get(j, "aspect_min", s.aspect_min);
    opt_get(j, "aspect_max", s.aspect_max);
    opt_get(j, "flip_p", s.flip_p);
    opt_get(j, "resolution", s.resolution);
}

void to_json(nlohmann::json& j, const AugmentConfig& s) {
    j = {{"crop_scale_min", s.crop_scale_min}, {"crop_scale_max", s.crop_scale_max},
         {"aspect_min", s.aspect_min},         {"aspect_max", s.aspect_max},
         {"flip_p", s.flip_p},                 {"resolution", s.resolution}};
}

void from_json(const nlohmann::json& j, SamplerConfig& s) {
    check_keys(j, {"num_inference_steps", "guidance_scale", "seed"}, "sampler");
    opt_get(j, "num_inference_steps", s.num_inference_steps);
    opt_get(j, "guidance_scale", s.guidance_scale);
    opt_get(j, "seed", s.seed);
}

void to_json(nlohmann::json& j, const SamplerConfig& s) {
    j = {{"num_inference_steps", s.num_inference_steps},
         {"guidance_scale", s.guidance_scale},
         {"seed", s.seed}};
}

void RunConfig::validate() const {
    if (preset != "toy" && preset != "full")
        throw ConfigError("config: preset must be 'toy' or 'full'");
    codec.validate();
    denoiser.validate();
    refiner.validate();
    train.validate();
    refiner_train.validate();
    if (num_train_timesteps < 1) throw ConfigError("config: num_train_timesteps must be >= 1");
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
        throw ConfigError("config: need 0 < beta_start < beta_end < 1");
    if (inference_resolution < codec.downsample_factor ||
        inference_resolution % codec.downsample_factor != 0)
        throw ConfigError("config: inference_resolution must be a multiple of the codec factor");
    if (output_resolution < 8) throw ConfigError("config: output_resolution too small");
    if (sampler.num_inference_steps < 1 ||
        sampler.num_inference_steps > num_train_timesteps)
        throw ConfigError("config: sampler steps out of range");
    if (sampler.guidance_scale < 0.0) throw ConfigError("config: guidance_scale must be >= 0");
    if (seeds < 1) throw ConfigError("config: seeds must be >= 1");
    if (refiner_seed_variants < 1) throw ConfigError("config: refiner_seed_variants must be >= 1");
    if (refiner_tuple_count < 0 || eval_limit < 0)
        throw ConfigError("config: counts must be >= 0");
    if (codec_train.steps < 0 || codec_train.batch_size < 1 || codec_train.lr <= 0.0 ||
        codec_train.max_images < 1)
        throw ConfigError("config: codec_train invalid");
}

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;
    if (name == "full") {
        cfg.preset = "full";
        cfg.codec.base_channels = 128;
        cfg.codec.channel_mults = {1, 2, 4, 4};
        cfg.codec.scaling_factor = 0.18215;
        cfg.denoiser.base_channels = 320;
        cfg.denoiser.channel_mults = {1, 2, 4, 4};
        cfg.denoiser.attention_levels = {0, 1, 2};
        cfg.denoiser.num_res_blocks = 2;
        cfg.denoiser.num_heads = 8;
        cfg.denoiser.context_length = 77;
        cfg.denoiser.context_dim = 768;
        cfg.refiner.base_channels = 64;
        cfg.refiner.num_stages = 4;
        // stage-1 recipe straight from the published run
        cfg.train = TrainConfig{};
        cfg.refiner_train = TrainConfig{};
        cfg.refiner_train.lr_phase1 = 1e-4;
        cfg.refiner_train.phase1_steps = 100000;
        cfg.refiner_train.lr_phase2 = 1e-5;
        cfg.refiner_train.phase2_steps = 20000;
        cfg.refiner_train.train_resolution = 256;
        cfg.codec_train.steps = 0;  // full preset imports codec weights instead
        cfg.synthetic.resolution = 512;
        cfg.augment.resolution = 512;
        cfg.inference_resolution = 1024;
        cfg.refiner_tuple_count = 0;
        return cfg;
    }
    if (name != "toy") throw ConfigError("config: unknown preset '" + name + "'");

    cfg.preset = "toy";
    cfg.codec.base_channels = 16;
    cfg.codec.channel_mults = {1, 1, 2, 2};
    cfg.codec.scaling_factor = 1.0;  // recomputed from latents after training
    cfg.codec_train.steps = 3000;
    cfg.codec_train.batch_size = 8;
    cfg.codec_train.lr = 1e-3;
    cfg.codec_train.seed = 7;
    cfg.codec_train.max_images = 600;

    cfg.denoiser.base_channels = 48;
    cfg.denoiser.channel_mults = {1, 2};
    cfg.denoiser.attention_levels = {1};
    cfg.denoiser.num_res_blocks = 1;
    cfg.denoiser.num_heads = 2;
    cfg.denoiser.context_length = 4;
    cfg.denoiser.context_dim = 32;

    cfg.train.batch_size = 16;
    cfg.train.lr_phase1 = 2e-4;
    cfg.train.phase1_steps = 4200;
    cfg.train.lr_phase2 = 5e-5;
    cfg.train.phase2_steps = 800;
    cfg.train.ema_decay = 0.998;
    cfg.train.train_resolution = 64;
    cfg.train.seed = 11;

    cfg.refiner.base_channels = 8;
    cfg.refiner.num_stages = 4;
    cfg.refiner_train.batch_size = 4;
    cfg.refiner_train.lr_phase1 = 2e-4;
    cfg.refiner_train.phase1_steps = 700;
    cfg.refiner_train.lr_phase2 = 5e-5;
    cfg.refiner_train.phase2_steps = 200;
    cfg.refiner_train.ema_decay = 0.998;
    cfg.refiner_train.train_resolution = 256;
    cfg.refiner_train.seed = 13;

    cfg.synthetic.train_count = 2000;
    cfg.synthetic.test_count = 200;
    cfg.synthetic.resolution = 64;
    cfg.synthetic.seed = 5;

    // flip-only geometry keeps encoded latents cacheable
    cfg.augment.crop_scale_min = 1.0;
    cfg.augment.crop_scale_max = 1.0;
    cfg.augment.aspect_min = 1.0;
    cfg.augment.aspect_max = 1.0;
    cfg.augment.flip_p = 0.5;
    cfg.augment.resolution = 64;

    // five default steps are too coarse for latents this small; 25 keeps the
    // toy chain fast while sampling cleanly
    cfg.sampler.num_inference_steps = 25;

    cfg.inference_resolution = 64;
    cfg.refiner_tuple_count = 1200;
    return cfg;
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["preset"] = c.preset;
    j["data_root"] = c.data_root;
    j["output_dir"] = c.output_dir;
    j["codec_checkpoint"] = c.codec_checkpoint;
    j["harmony_checkpoint"] = c.harmony_checkpoint;
    j["refiner_checkpoint"] = c.refiner_checkpoint;
    j["num_train_timesteps"] = c.num_train_timesteps;
    j["beta_start"] = c.beta_start;
    j["beta_end"] = c.beta_end;
    j["codec"] = c.codec;
    j["denoiser"] = c.denoiser;
    j["refiner"] = c.refiner;
    j["codec_train"] = c.codec_train;
    j["train"] = c.train;
    j["refiner_train"] = c.refiner_train;
    j["synthetic"] = c.synthetic;
    j["augment"] = c.augment;
    j["sampler"] = c.sampler;
    j["inference_resolution"] = c.inference_resolution;
    j["output_resolution"] = c.output_resolution;
    j["blend_background"] = c.blend_background;
    j["use_refiner"] = c.use_refiner;
    j["metrics_round_to_int"] = c.metrics_round_to_int;
    j["seeds"] = c.seeds;
    j["refiner_seed_variants"] = c.refiner_seed_variants;
    j["refiner_tuple_count"] = c.refiner_tuple_count;
    j["eval_limit"] = c.eval_limit;
    return j;
}

RunConfig config_from_json(const nlohmann::json& j, RunConfig base) {
    if (j.contains("preset")) {
        std::string p;
        j.at("preset").get_to(p);
        if (p != base.preset) base = preset_config(p);
    }
    check_keys(j,
               {"preset",
                "data_root",
                "output_dir",
                "codec_checkpoint",
                "harmony_checkpoint",
                "refiner_checkpoint",
                "num_train_timesteps",
                "beta_start",
                "beta_end",
                "codec",
                "denoiser",
                "refiner",
                "codec_train",
                "train",
                "refiner_train",
                "synthetic",
                "augment",
                "sampler",
                "inference_resolution",
                "output_resolution",
                "blend_background",
                "use_refiner",
                "metrics_round_to_int",
                "seeds",
                "refiner_seed_variants",
                "refiner_tuple_count",
                "eval_limit"},
               "<root>");
    opt_get(j, "data_root", base.data_root);
    opt_get(j, "output_dir", base.output_dir);
    opt_get(j, "codec_checkpoint", base.codec_checkpoint);
    opt_get(j, "harmony_checkpoint", base.harmony_checkpoint);
    opt_get(j, "refiner_checkpoint", base.refiner_checkpoint);
    opt_get(j, "num_train_timesteps", base.num_train_timesteps);
    opt_get(j, "beta_start", base.beta_start);
    opt_get(j, "beta_end", base.beta_end);
    opt_get(j, "codec", base.codec);
    opt_get(j, "denoiser", base.denoiser);
    opt_get(j, "refiner", base.refiner);
    opt_get(j, "codec_train", base.codec_train);
    opt_get(j, "train", base.train);
    opt_get(j, "refiner_train", base.refiner_train);
    opt_get(j, "synthetic", base.synthetic);
    opt_get(j, "augment", base.augment);
    opt_get(j, "sampler", base.sampler);
    opt_get(j, "inference_resolution", base.inference_resolution);
    opt_get(j, "output_resolution", base.output_resolution);
    opt_get(j, "blend_background", base.blend_background);
    opt_get(j, "use_refiner", base.use_refiner);
    opt_get(j, "metrics_round_to_int", base.metrics_round_to_int);
    opt_get(j, "seeds", base.seeds);
    opt_get(j, "refiner_seed_variants", base.refiner_seed_variants);
    opt_get(j, "refiner_tuple_count", base.refiner_tuple_count);
    opt_get(j, "eval_limit", base.eval_limit);
    base.validate();
    return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
    return config_from_json(j, std::move(base));
}

void echo_config(const RunConfig& config, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / "config.json");
    if (!out) throw DataError("config: cannot write echo into " + dir);
    out << to_json(config).dump(2) << "\n";
}

}  // namespace harmony
