#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "harmony/codec.hpp"
#include "harmony/dataset.hpp"
#include "harmony/denoiser.hpp"
#include "harmony/refiner.hpp"
#include "harmony/sampler.hpp"
#include "harmony/training.hpp"

namespace harmony {

// Resolved run configuration. Defaults mirror the published recipe where one
// exists; the toy preset swaps in desk-scale values. JSON round-trips
// losslessly and unknown keys are rejected on load.
struct RunConfig {
    std::string preset = "toy";
    std::string data_root;  // env HARMONY_DATA_ROOT fills this when empty
    std::string output_dir = "out";

    std::string codec_checkpoint;
    std::string harmony_checkpoint;
    std::string refiner_checkpoint;

    int64_t num_train_timesteps = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;

    CodecSettings codec;
    DenoiserSettings denoiser;
    RefinerSettings refiner;
    CodecTrainConfig codec_train;
    TrainConfig train;
    TrainConfig refiner_train;
    SyntheticConfig synthetic;
    AugmentConfig augment;
    SamplerConfig sampler;

    int64_t inference_resolution = 1024;
    int64_t output_resolution = 256;
    bool blend_background = true;
    bool use_refiner = true;
    bool metrics_round_to_int = false;
    int64_t seeds = 1;
    int64_t refiner_seed_variants = 2;  // stage-1 variants per sample in the tuple set
    int64_t refiner_tuple_count = 0;    // train samples feeding the tuple set, 0 = all
    int64_t eval_limit = 0;             // 0 = whole test split

    void validate() const;
};

// JSON (de)serialization with overlay semantics: absent keys keep the current
// value, unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, CodecSettings& s);
void from_json(const nlohmann::json& j, DenoiserSettings& s);
void from_json(const nlohmann::json& j, RefinerSettings& s);
void from_json(const nlohmann::json& j, CodecTrainConfig& s);
void from_json(const nlohmann::json& j, TrainConfig& s);
void from_json(const nlohmann::json& j, SyntheticConfig& s);
void from_json(const nlohmann::json& j, AugmentConfig& s);
void from_json(const nlohmann::json& j, SamplerConfig& s);
void to_json(nlohmann::json& j, const CodecSettings& s);
void to_json(nlohmann::json& j, const DenoiserSettings& s);
void to_json(nlohmann::json& j, const RefinerSettings& s);
void to_json(nlohmann::json& j, const CodecTrainConfig& s);
void to_json(nlohmann::json& j, const TrainConfig& s);
void to_json(nlohmann::json& j, const SyntheticConfig& s);
void to_json(nlohmann::json& j, const AugmentConfig& s);
void to_json(nlohmann::json& j, const SamplerConfig& s);

RunConfig preset_config(const std::string& name);  // "toy" or "full"

nlohmann::json to_json(const RunConfig& config);

// Overlays a JSON object (file contents) onto `base`. Unknown keys anywhere
// raise ConfigError naming the offending path.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base);

RunConfig load_config_file(const std::string& path, RunConfig base);

// Writes the resolved config next to a command's outputs.
void echo_config(const RunConfig& config, const std::string& dir);

}  // namespace harmony
