#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "harmony/commands.hpp"
#include "harmony/errors.hpp"

namespace {

harmony::RunConfig overlay_file(const std::string& path, harmony::RunConfig base,
                                bool preset_flag_given) {
    std::ifstream in(path);
    if (!in) throw harmony::ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw harmony::ConfigError("config: parse error in " + path + ": " + e.what());
    }
    // an explicit --preset beats the file's preset key
    if (preset_flag_given) j.erase("preset");
    return harmony::config_from_json(j, std::move(base));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage latent diffusion image harmonizer"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, preset = "toy", data_root, output_dir;
    int64_t resolution = 0, steps = 0, seeds = 0;
    uint64_t seed = 0;
    auto* opt_config = app.add_option("--config", config_path, "JSON run config");
    auto* opt_preset = app.add_option("--preset", preset, "model scale preset")
                           ->check(CLI::IsMember({"toy", "full"}));
    auto* opt_resolution =
        app.add_option("--resolution", resolution, "stage-1 inference resolution");
    auto* opt_steps = app.add_option("--steps", steps, "sampler steps");
    auto* opt_seed = app.add_option("--seed", seed, "base sampling seed");
    auto* opt_seeds = app.add_option("--seeds", seeds, "evaluation seed count");
    auto* opt_no_refine = app.add_flag("--no-refine", "stop after stage 1");
    auto* opt_no_blend = app.add_flag("--no-blend", "skip background blending");
    auto* opt_output = app.add_option("--output-dir", output_dir, "output directory");
    auto* opt_data =
        app.add_option("--data-root", data_root, "dataset root (else HARMONY_DATA_ROOT)");

    auto* sc_synth =
        app.add_subcommand("make-synthetic", "generate the synthetic harmonization set");
    auto* sc_codec = app.add_subcommand("train-codec", "train the latent image codec");
    auto* sc_harmony =
        app.add_subcommand("train-harmony", "train the stage-1 diffusion model");
    auto* sc_refine = app.add_subcommand("train-refine", "train the stage-2 refiner");

    std::string input_dir;
    auto* sc_infer = app.add_subcommand("infer", "harmonize a dataset's test split");
    sc_infer->add_option("input_dir", input_dir, "dataset root (defaults to the data root)");

    std::string pred_dir;
    auto* sc_eval = app.add_subcommand("evaluate", "score predictions against ground truth");
    sc_eval->add_option("--pred-dir", pred_dir,
                        "directory of <id>.png predictions; omit to run inference internally");

    std::vector<std::string> grid_inputs, grid_outputs, grid_gts;
    std::string grid_out = "grid.png";
    auto* sc_grid = app.add_subcommand("report-grid", "side-by-side comparison grid");
    sc_grid->add_option("--inputs", grid_inputs, "composite images")->required();
    sc_grid->add_option("--outputs", grid_outputs, "harmonized images")->required();
    sc_grid->add_option("--gts", grid_gts, "ground-truth images");
    sc_grid->add_option("--out", grid_out, "grid file to write");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        harmony::RunConfig config = harmony::preset_config(preset);
        if (opt_config->count() > 0)
            config = overlay_file(config_path, std::move(config), opt_preset->count() > 0);
        if (opt_resolution->count() > 0) config.inference_resolution = resolution;
        if (opt_steps->count() > 0) config.sampler.num_inference_steps = steps;
        if (opt_seed->count() > 0) config.sampler.seed = seed;
        if (opt_seeds->count() > 0) config.seeds = seeds;
        if (opt_no_refine->count() > 0) config.use_refiner = false;
        if (opt_no_blend->count() > 0) config.blend_background = false;
        if (opt_output->count() > 0) config.output_dir = output_dir;
        if (opt_data->count() > 0) config.data_root = data_root;
        config.validate();

        if (sc_synth->parsed()) {
            harmony::cmd_make_synthetic(config);
        } else if (sc_codec->parsed()) {
            harmony::cmd_train_codec(config);
        } else if (sc_harmony->parsed()) {
            harmony::cmd_train_harmony(config);
        } else if (sc_refine->parsed()) {
            harmony::cmd_train_refine(config);
        } else if (sc_infer->parsed()) {
            harmony::cmd_infer(config, input_dir);
        } else if (sc_eval->parsed()) {
            harmony::cmd_evaluate(config, pred_dir);
        } else if (sc_grid->parsed()) {
            harmony::cmd_report_grid(grid_inputs, grid_outputs, grid_gts, grid_out);
        }
        return 0;
    } catch (const harmony::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const harmony::ParamError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const harmony::DataError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    } catch (const harmony::ValidationError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    } catch (const harmony::TrainingError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
