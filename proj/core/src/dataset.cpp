#include "harmony/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "harmony/errors.hpp"
#include "harmony/image.hpp"
#include "harmony/rng.hpp"

namespace fs = std::filesystem;

namespace harmony {

double mask_foreground_ratio(const torch::Tensor& mask) {
    if (mask.numel() == 0) throw ParamError("foreground_ratio: empty tensor");
    torch::Tensor m = mask.to(torch::kFloat32);
    if (!((m == 0.0).logical_or(m == 1.0)).all().item<bool>())
        throw ParamError("foreground_ratio: mask must be binary");
    const double r = m.to(torch::kFloat64).mean().item<double>();
    if (r == 0.0) throw ValidationError("foreground_ratio: mask has no foreground");
    return r;
}

std::string bucket_of(double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ParamError("bucket_of: ratio must be in (0,1]");
    if (ratio < 0.05) return kBucketNames[0];
    if (ratio < 0.15) return kBucketNames[1];
    return kBucketNames[2];
}

namespace {

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct ResolveOutcome {
    std::optional<HarmonySample> sample;
    std::vector<std::string> missing;
    bool malformed = false;
};

ResolveOutcome resolve_composite(const fs::path& subset_dir, const std::string& subset,
                                 const std::string& name) {
    ResolveOutcome out;
    const fs::path comp = subset_dir / "composite_images" / name;
    const std::string stem = fs::path(name).stem().string();
    const auto p1 = stem.rfind('_');
    const auto p2 = p1 == std::string::npos ? std::string::npos : stem.rfind('_', p1 - 1);
    if (p1 == std::string::npos || p2 == std::string::npos || p2 == 0) {
        out.malformed = true;
        return out;
    }
    const fs::path mask = subset_dir / "masks" / (stem.substr(0, p1) + ".png");
    fs::path real = subset_dir / "real_images" / (stem.substr(0, p2) + ".jpg");
    if (!fs::exists(real)) {
        const fs::path alt = subset_dir / "real_images" / (stem.substr(0, p2) + ".png");
        if (fs::exists(alt)) real = alt;
    }

    if (!fs::exists(comp)) out.missing.push_back(comp.string());
    if (!fs::exists(mask)) out.missing.push_back(mask.string());
    if (!fs::exists(real)) out.missing.push_back(real.string());
    if (!out.missing.empty()) return out;

    HarmonySample s;
    s.id = stem;
    s.composite_path = comp.string();
    s.mask_path = mask.string();
    s.real_path = real.string();
    s.subset = subset;
    try {
        s.foreground_ratio = mask_foreground_ratio(load_mask(s.mask_path));
    } catch (const std::exception& e) {
        out.missing.push_back(mask.string() + " (" + e.what() + ")");
        return out;
    }
    out.sample = std::move(s);
    return out;
}

}  // namespace

SplitManifest load_iharmony4(const std::string& root_dir) {
    if (!fs::is_directory(root_dir))
        throw DataError("load_iharmony4: not a directory: " + root_dir);

    std::vector<fs::path> subset_dirs;
    for (const auto& entry : fs::directory_iterator(root_dir))
        if (entry.is_directory() && fs::is_directory(entry.path() / "composite_images"))
            subset_dirs.push_back(entry.path());
    std::sort(subset_dirs.begin(), subset_dirs.end());
    if (subset_dirs.empty())
        throw DataError("load_iharmony4: no subset directories with composite_images/ under " +
                        root_dir);

    SplitManifest manifest;
    std::vector<std::string> missing;
    int64_t malformed = 0;

    for (const auto& dir : subset_dirs) {
        const std::string subset = dir.filename().string();
        for (const bool is_train : {true, false}) {
            const fs::path list_file =
                dir / (subset + (is_train ? "_train.txt" : "_test.txt"));
            if (!fs::exists(list_file)) continue;
            std::ifstream in(list_file);
            std::string line;
            while (std::getline(in, line)) {
                const std::string name = trimmed(line);
                if (name.empty()) continue;
                ResolveOutcome out = resolve_composite(dir, subset, name);
                if (out.malformed) {
                    ++malformed;
                    continue;
                }
                if (!out.missing.empty()) {
                    missing.insert(missing.end(), out.missing.begin(), out.missing.end());
                    continue;
                }
                auto& bucket = is_train ? manifest.train : manifest.test;
                auto& counts = is_train ? manifest.train_counts : manifest.test_counts;
                bucket.push_back(std::move(*out.sample));
                ++counts[subset];
            }
        }
    }

    if (malformed > 0)
        std::cerr << "load_iharmony4: skipped " << malformed << " malformed composite names\n";
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "load_iharmony4: " << missing.size() << " missing or invalid files:";
        const size_t show = std::min<size_t>(missing.size(), 20);
        for (size_t i = 0; i < show; ++i) msg << "\n  " << missing[i];
        if (missing.size() > show) msg << "\n  ... (" << missing.size() - show << " more)";
        throw DataError(msg.str());
    }
    if (manifest.train.empty() && manifest.test.empty())
        throw DataError("load_iharmony4: no samples resolved under " + root_dir);

    const std::vector<std::string> official = {"HAdobe5k", "HCOCO", "Hday2night", "HFlickr"};
    bool all_official = true;
    for (const auto& s : official)
        if (!manifest.train_counts.count(s)) all_official = false;
    if (all_official && manifest.train_counts.size() == official.size()) {
        const int64_t total_train = static_cast<int64_t>(manifest.train.size());
        const int64_t total_test = static_cast<int64_t>(manifest.test.size());
        if (total_train != 65742 || total_test != 7404)
            std::cerr << "load_iharmony4: official subsets present but counts are " << total_train
                      << "/" << total_test << ", expected 65742/7404\n";
    }
    return manifest;
}

SampleImages load_sample(const HarmonySample& sample) {
    SampleImages out;
    out.composite = load_image(sample.composite_path);
    out.mask = load_mask(sample.mask_path);
    out.real = load_image(sample.real_path);
    if (out.composite.size(1) != out.mask.size(1) || out.composite.size(2) != out.mask.size(2) ||
        !out.composite.sizes().equals(out.real.sizes()))
        throw DataError("load_sample: size mismatch across triplet for id " + sample.id);
    return out;
}

namespace {

double uniform(double lo, double hi, torch::Generator& gen) {
    return lo + (hi - lo) * torch::rand({1}, gen, torch::kFloat64).item<double>();
}

int64_t uniform_int(int64_t lo, int64_t hi_inclusive, torch::Generator& gen) {
    if (hi_inclusive <= lo) return lo;
    return torch::randint(lo, hi_inclusive + 1, {1}, gen, torch::TensorOptions(torch::kLong))
        .item<int64_t>();
}

struct CropRect {
    int64_t y0, x0, h, w;
};

SampleImages apply_crop(const SampleImages& s, const CropRect& r, int64_t resolution, bool flip) {
    auto cut = [&](const torch::Tensor& t) {
        return t.index({torch::indexing::Slice(), torch::indexing::Slice(r.y0, r.y0 + r.h),
                        torch::indexing::Slice(r.x0, r.x0 + r.w)});
    };
    SampleImages out;
    out.composite = resize_bicubic(cut(s.composite), resolution, resolution).clamp(0.0, 1.0);
    out.mask = resize_nearest(cut(s.mask), resolution, resolution);
    out.real = resize_bicubic(cut(s.real), resolution, resolution).clamp(0.0, 1.0);
    if (flip) {
        out.composite = torch::flip(out.composite, {2});
        out.mask = torch::flip(out.mask, {2});
        out.real = torch::flip(out.real, {2});
    }
    return out;
}

}  // namespace

SampleImages augment(const SampleImages& images, const AugmentConfig& config,
                     torch::Generator& gen) {
    if (!(config.crop_scale_min > 0.0 && config.crop_scale_min <= config.crop_scale_max &&
          config.crop_scale_max <= 1.0))
        throw ParamError("augment: crop scale range invalid");
    if (!(config.aspect_min > 0.0 && config.aspect_min <= config.aspect_max))
        throw ParamError("augment: aspect range invalid");
    if (config.flip_p < 0.0 || config.flip_p > 1.0) throw ParamError("augment: flip_p invalid");
    if (config.resolution < 1) throw ParamError("augment: resolution invalid");

    const int64_t H = images.composite.size(1), W = images.composite.size(2);
    const bool flip = uniform(0.0, 1.0, gen) < config.flip_p;

    for (int attempt = 0; attempt < 10; ++attempt) {
        const double scale = uniform(config.crop_scale_min, config.crop_scale_max, gen);
        const double aspect = uniform(config.aspect_min, config.aspect_max, gen);
        const double area = scale * static_cast<double>(H) * static_cast<double>(W);
        int64_t w = std::llround(std::sqrt(area * aspect));
        int64_t h = std::llround(std::sqrt(area / aspect));
        w = std::clamp<int64_t>(w, 1, W);
        h = std::clamp<int64_t>(h, 1, H);
        CropRect r{uniform_int(0, H - h, gen), uniform_int(0, W - w, gen), h, w};
        SampleImages out = apply_crop(images, r, config.resolution, flip);
        if (out.mask.sum().item<double>() > 0.0) return out;
    }
    // center fallback keeps the whole image (and thus the foreground)
    return apply_crop(images, CropRect{0, 0, H, W}, config.resolution, flip);
}

std::vector<torch::Tensor> make_procedural_bases(int64_t count, int64_t resolution,
                                                 uint64_t seed) {
    if (count < 1) throw ParamError("make_procedural_bases: count must be >= 1");
    if (resolution < 8) throw ParamError("make_procedural_bases: resolution too small");

    torch::Tensor ls = torch::linspace(0.0, 1.0, resolution, torch::kFloat32);
    torch::Tensor Y = ls.unsqueeze(1).expand({resolution, resolution});
    torch::Tensor X = ls.unsqueeze(0).expand({resolution, resolution});

    std::vector<torch::Tensor> out;
    out.reserve(count);
    for (int64_t i = 0; i < count; ++i) {
        torch::Generator gen = make_generator(derive_seed(seed, "base", i));
        const double angle = uniform(0.0, 2.0 * M_PI, gen);
        torch::Tensor g = X * std::cos(angle) + Y * std::sin(angle);
        g = (g - g.min()) / (g.max() - g.min() + 1e-8);
        torch::Tensor c0 = torch::rand({3, 1, 1}, gen);
        torch::Tensor c1 = torch::rand({3, 1, 1}, gen);
        torch::Tensor img = c0 * (1.0 - g) + c1 * g;

        const int64_t shapes = 2 + uniform_int(0, 3, gen);
        for (int64_t k = 0; k < shapes; ++k) {
            const double cx = uniform(0.1, 0.9, gen), cy = uniform(0.1, 0.9, gen);
            const double rx = uniform(0.06, 0.35, gen), ry = uniform(0.06, 0.35, gen);
            const double steep = uniform(4.0, 12.0, gen);
            torch::Tensor d = ((X - cx) / rx).pow(2) + ((Y - cy) / ry).pow(2);
            torch::Tensor alpha = torch::sigmoid((1.0 - d) * steep);
            torch::Tensor ck = torch::rand({3, 1, 1}, gen);
            img = img * (1.0 - alpha) + ck * alpha;
        }
        torch::Tensor noise = torch::randn({3, 8, 8}, gen) * uniform(0.01, 0.04, gen);
        img = img + resize_bicubic(noise, resolution, resolution);
        out.push_back(img.clamp(0.02, 0.98));
    }
    return out;
}

namespace {

torch::Tensor ellipse_mask(int64_t resolution, double ratio, torch::Generator& gen) {
    torch::Tensor ls = torch::linspace(0.0, 1.0, resolution, torch::kFloat32);
    torch::Tensor Y = ls.unsqueeze(1).expand({resolution, resolution});
    torch::Tensor X = ls.unsqueeze(0).expand({resolution, resolution});
    const double k = uniform(0.5, 2.0, gen);
    const double theta = uniform(0.0, M_PI, gen);
    const double area = ratio;  // in unit-square coords
    const double a = std::sqrt(area * k / M_PI);
    const double b = std::sqrt(area / (k * M_PI));
    const double cx = uniform(0.25, 0.75, gen);
    const double cy = uniform(0.25, 0.75, gen);
    torch::Tensor xr = (X - cx) * std::cos(theta) + (Y - cy) * std::sin(theta);
    torch::Tensor yr = -(X - cx) * std::sin(theta) + (Y - cy) * std::cos(theta);
    torch::Tensor inside = (xr / a).pow(2) + (yr / b).pow(2) <= 1.0;
    return inside.to(torch::kFloat32).unsqueeze(0);
}

struct ShiftParams {
    double gains[3];
    double brightness;
    double contrast;
};

torch::Tensor apply_shift(const torch::Tensor& gt, const torch::Tensor& mask,
                          const ShiftParams& p) {
    torch::Tensor g = torch::tensor({p.gains[0], p.gains[1], p.gains[2]}, torch::kFloat32)
                          .reshape({3, 1, 1});
    torch::Tensor fg = (0.5 + p.contrast * (gt * g * p.brightness - 0.5)).clamp(0.0, 1.0);
    return gt * (1.0 - mask) + fg * mask;
}

}  // namespace

SplitManifest make_synthetic_set(const std::vector<torch::Tensor>& base_images,
                                 const std::string& out_dir, const SyntheticConfig& config) {
    if (base_images.empty()) throw ParamError("make_synthetic_set: no base images");
    if (config.train_count < 0 || config.test_count < 0 ||
        config.train_count + config.test_count < 1)
        throw ParamError("make_synthetic_set: counts invalid");
    if (config.resolution < 8) throw ParamError("make_synthetic_set: resolution too small");

    const fs::path subset_dir = fs::path(out_dir) / "synthetic";
    fs::create_directories(subset_dir / "composite_images");
    fs::create_directories(subset_dir / "masks");
    fs::create_directories(subset_dir / "real_images");

    // held-out samples draw from bases the train side never sees
    const int64_t n_bases = static_cast<int64_t>(base_images.size());
    const int64_t train_base_end = std::max<int64_t>(1, (n_bases * 4) / 5);
    const bool split_bases = n_bases >= 5;

    SplitManifest manifest;
    std::ofstream train_list(subset_dir / "synthetic_train.txt");
    std::ofstream test_list(subset_dir / "synthetic_test.txt");
    nlohmann::json params = nlohmann::json::array();

    const int64_t total = config.train_count + config.test_count;
    for (int64_t i = 0; i < total; ++i) {
        const bool is_train = i < config.train_count;
        torch::Generator gen = make_generator(derive_seed(config.seed, "synth", i));

        const int64_t lo = (!split_bases || is_train) ? 0 : train_base_end;
        const int64_t hi = (!split_bases || !is_train) ? n_bases - 1 : train_base_end - 1;
        const int64_t base_idx = uniform_int(lo, hi, gen);
        torch::Tensor gt = base_images[base_idx];
        if (gt.size(1) != config.resolution || gt.size(2) != config.resolution)
            gt = resize_bicubic(gt, config.resolution, config.resolution).clamp(0.0, 1.0);

        torch::Tensor mask;
        double ratio = 0.0;
        int64_t bucket = 0;
        for (int attempt = 0; attempt < 20; ++attempt) {
            bucket = uniform_int(0, 2, gen);
            const double target = bucket == 0   ? uniform(0.012, 0.05, gen)
                                  : bucket == 1 ? uniform(0.05, 0.15, gen)
                                                : uniform(0.15, 0.45, gen);
            mask = ellipse_mask(config.resolution, target, gen);
            ratio = mask.to(torch::kFloat64).mean().item<double>();
            if (ratio > 0.0) break;
        }
        if (ratio == 0.0) throw TrainingError("make_synthetic_set: failed to draw a mask");

        ShiftParams best{};
        torch::Tensor composite;
        double best_effect = -1.0;
        const double fg_count = mask.sum().item<double>();
        for (int attempt = 0; attempt < 20; ++attempt) {
            ShiftParams p{};
            for (double& gv : p.gains)
                gv = 1.0 + uniform(-config.channel_gain_range, config.channel_gain_range, gen);
            p.brightness = 1.0 + uniform(-config.brightness_range, config.brightness_range, gen);
            p.contrast = 1.0 + uniform(-config.contrast_range, config.contrast_range, gen);
            torch::Tensor cand = apply_shift(gt, mask, p);
            const double effect =
                ((cand - gt).abs() * mask).sum().item<double>() / (3.0 * fg_count);
            if (effect > best_effect) {
                best_effect = effect;
                best = p;
                composite = cand;
            }
            if (effect >= config.min_effect) break;
        }

        const std::string stem = "synth" + std::to_string(i);
        const std::string comp_name = stem + "_1_1.png";
        save_image((subset_dir / "composite_images" / comp_name).string(), composite);
        save_mask((subset_dir / "masks" / (stem + "_1.png")).string(), mask);
        save_image((subset_dir / "real_images" / (stem + ".png")).string(), gt);
        (is_train ? train_list : test_list) << comp_name << "\n";

        params.push_back({{"id", stem + "_1_1"},
                          {"base_index", base_idx},
                          {"bucket", bucket},
                          {"ratio", ratio},
                          {"gains", {best.gains[0], best.gains[1], best.gains[2]}},
                          {"brightness", best.brightness},
                          {"contrast", best.contrast},
                          {"effect", best_effect}});

        HarmonySample s;
        s.id = stem + "_1_1";
        s.composite_path = (subset_dir / "composite_images" / comp_name).string();
        s.mask_path = (subset_dir / "masks" / (stem + "_1.png")).string();
        s.real_path = (subset_dir / "real_images" / (stem + ".png")).string();
        s.subset = "synthetic";
        s.foreground_ratio = ratio;
        auto& side = is_train ? manifest.train : manifest.test;
        side.push_back(std::move(s));
        ++(is_train ? manifest.train_counts : manifest.test_counts)["synthetic"];
    }

    std::ofstream(subset_dir / "generator_params.json") << params.dump(2) << "\n";
    return manifest;
}

}  // namespace harmony
