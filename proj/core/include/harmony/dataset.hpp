#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace harmony {

struct HarmonySample {
    std::string id;  // composite filename stem, unique within a manifest
    std::string composite_path;
    std::string mask_path;
    std::string real_path;
    std::string subset;  // HCOCO, HAdobe5k, HFlickr, Hday2night or synthetic
    double foreground_ratio = 0.0;
};

struct SplitManifest {
    std::vector<HarmonySample> train;
    std::vector<HarmonySample> test;
    std::map<std::string, int64_t> train_counts;  // per subset
    std::map<std::string, int64_t> test_counts;
};

// Scans an iHarmony4-layout root: per-subset composite_images/, masks/,
// real_images/ plus <subset>_train.txt / <subset>_test.txt listing composite
// filenames. Composite "a_b_c.ext" resolves to mask "a_b.png" and real
// "a.jpg" (falling back to .png). Missing companions raise a DataError
// listing every offender; malformed names are skipped with a warning count.
SplitManifest load_iharmony4(const std::string& root_dir);

// On-pixel fraction of a binary mask; all-zero masks are invalid samples.
double mask_foreground_ratio(const torch::Tensor& mask);

// Half-open buckets [0,0.05), [0.05,0.15), [0.15,1.0].
std::string bucket_of(double ratio);
inline const char* kBucketNames[3] = {"0-5%", "5-15%", "15-100%"};

struct SampleImages {
    torch::Tensor composite;  // 3,H,W in [0,1]
    torch::Tensor mask;       // 1,H,W in {0,1}
    torch::Tensor real;       // 3,H,W in [0,1]
};

SampleImages load_sample(const HarmonySample& sample);

struct AugmentConfig {
    double crop_scale_min = 0.5;
    double crop_scale_max = 1.0;
    double aspect_min = 0.75;
    double aspect_max = 4.0 / 3.0;
    double flip_p = 0.5;
    int64_t resolution = 512;
};

// Random resized crop + horizontal flip, the same geometry for all three
// images. Crops that lose the whole foreground are resampled up to 10 times,
// then replaced by a center crop.
SampleImages augment(const SampleImages& images, const AugmentConfig& config,
                     torch::Generator& gen);

struct SyntheticConfig {
    int64_t train_count = 2000;
    int64_t test_count = 200;
    int64_t resolution = 64;
    double brightness_range = 0.3;
    double contrast_range = 0.3;
    double channel_gain_range = 0.2;
    double min_effect = 0.08;  // mean |composite-gt| inside the mask, [0,1] scale
    uint64_t seed = 0;
};

// Smooth procedural base images (layered gradients and soft shapes), CHW in
// [0,1]. Deterministic per (count, resolution, seed).
std::vector<torch::Tensor> make_procedural_bases(int64_t count, int64_t resolution, uint64_t seed);

// Writes an iHarmony4-layout synthetic subset under out_dir: each sample is
// a base image (ground truth), a random elliptical mask spanning all three
// ratio buckets, and a composite whose foreground got a brightness/contrast/
// channel-gain shift. Generator parameters land in generator_params.json.
SplitManifest make_synthetic_set(const std::vector<torch::Tensor>& base_images,
                                 const std::string& out_dir, const SyntheticConfig& config);

}  // namespace harmony
