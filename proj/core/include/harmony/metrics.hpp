#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace harmony {

// All three take CHW float tensors on the 0-255 scale.
double mse(const torch::Tensor& pred, const torch::Tensor& gt);
double psnr(const torch::Tensor& pred, const torch::Tensor& gt);
double psnr_from_mse(double mse_value);

// Foreground MSE: squared error summed over mask-on pixels across the 3
// channels, divided by 3 * |foreground|. Equals mse under an all-ones mask.
double fmse(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask);

struct EvalRecord {
    std::string id;
    std::string subset;
    double psnr = 0.0;
    double mse = 0.0;
    double fmse = 0.0;
    double foreground_ratio = 0.0;
    uint64_t seed = 0;
};

struct MetricOptions {
    int64_t eval_resolution = 256;
    bool round_to_int = false;  // float metrics by default, integer rounding opt-in
};

// Resizes pred and gt (CHW, [0,1]) to eval_resolution via bicubic, the mask
// via nearest, scales to 0-255 and fills an EvalRecord.
EvalRecord evaluate_sample(const torch::Tensor& pred, const torch::Tensor& gt,
                           const torch::Tensor& mask, const std::string& id,
                           const std::string& subset, double foreground_ratio, uint64_t seed,
                           const MetricOptions& options = {});

struct GroupStats {
    int64_t count = 0;
    double psnr = 0.0;
    double mse = 0.0;
    double fmse = 0.0;
};

struct SeedStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample std (n-1) across seed-level means
};

struct EvalReport {
    GroupStats overall;
    std::map<std::string, GroupStats> per_subset;
    std::map<std::string, GroupStats> per_bucket;
    int64_t seed_count = 1;
    SeedStats psnr_seeds, mse_seeds, fmse_seeds;  // meaningful when seed_count > 1
};

// Unweighted per-sample means within every group; the overall row therefore
// equals the count-weighted combination of subset rows. With multiple seeds,
// seed-level overall means feed the mean +/- sample-std summary.
EvalReport aggregate(const std::vector<EvalRecord>& records);

std::string format_report(const EvalReport& report);  // human-readable tables
std::string report_csv(const EvalReport& report);
std::string records_csv(const std::vector<EvalRecord>& records);

// "37.66 ± 0.02" style, two decimals.
std::string format_mean_std(const SeedStats& stats);

}  // namespace harmony
