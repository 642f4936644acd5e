#pragma once

#include <string>
#include <vector>

#include "harmony/config.hpp"

namespace harmony {

// Subcommand bodies shared by the CLI binary and the tests. Each writes its
// outputs plus a config echo under config.output_dir and throws the module
// error types; exit-code mapping lives in the binary.

void cmd_make_synthetic(const RunConfig& config);

void cmd_train_codec(const RunConfig& config);

// Resumes from config.harmony_checkpoint when it exists.
void cmd_train_harmony(const RunConfig& config);

// Generates the (stage-1 output, composite, mask, gt) tuple set when absent,
// then trains the refiner on it.
void cmd_train_refine(const RunConfig& config);

// Harmonizes every test-split sample under input_dir (iHarmony4 layout).
// Writes <id>.png per sample plus manifest.json.
void cmd_infer(const RunConfig& config, const std::string& input_dir);

// Scores predictions against the test split. With pred_dir empty, runs
// inference internally for each of config.seeds seeds and reports the
// mean +/- std across seeds.
void cmd_evaluate(const RunConfig& config, const std::string& pred_dir);

// Side-by-side grid: one row per sample, columns composite | output | gt.
void cmd_report_grid(const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs,
                     const std::vector<std::string>& gts, const std::string& out_path);

}  // namespace harmony
