#include "testing.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include "harmony/dataset.hpp"
#include "harmony/errors.hpp"
#include "harmony/image.hpp"
#include "harmony/rng.hpp"

using namespace harmony;
namespace fs = std::filesystem;

namespace {

const std::string kFixtureRoot = std::string(HARMONY_FIXTURE_DIR) + "/iharmony_mini";

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("harmony_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const HarmonySample& find_sample(const std::vector<HarmonySample>& v, const std::string& id) {
    for (const auto& s : v)
        if (s.id == id) return s;
    FAIL("sample not found: ", id);
    return v.front();
}

// one valid triplet so a layout is loadable at all
void write_triplet(const fs::path& subset_dir, const std::string& stem) {
    fs::create_directories(subset_dir / "composite_images");
    fs::create_directories(subset_dir / "masks");
    fs::create_directories(subset_dir / "real_images");
    torch::Tensor img = torch::full({3, 16, 16}, 0.5f);
    torch::Tensor mask = torch::zeros({1, 16, 16});
    mask.index_put_({0, torch::indexing::Slice(4, 8), torch::indexing::Slice(4, 8)}, 1.0);
    save_image((subset_dir / "composite_images" / (stem + "_1_1.png")).string(), img);
    save_mask((subset_dir / "masks" / (stem + "_1.png")).string(), mask);
    save_image((subset_dir / "real_images" / (stem + ".png")).string(), img);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("fixture layout resolves ids, subsets, and exact foreground ratios") {
    SplitManifest m = load_iharmony4(kFixtureRoot);

    CHECK(m.train.size() == 2);
    CHECK(m.test.size() == 6);
    CHECK(m.train_counts.at("HCOCO") == 1);
    CHECK(m.train_counts.at("HAdobe5k") == 1);
    CHECK(m.test_counts.at("HCOCO") == 2);
    CHECK(m.test_counts.at("HAdobe5k") == 2);
    CHECK(m.test_counts.at("HFlickr") == 1);
    CHECK(m.test_counts.at("Hday2night") == 1);

    // rect masks with known pixel counts out of 64*64
    CHECK(find_sample(m.test, "c1_1_1").foreground_ratio == 82.0 / 4096.0);
    CHECK(find_sample(m.test, "c2_1_1").foreground_ratio == 410.0 / 4096.0);
    CHECK(find_sample(m.test, "a1_1_1").foreground_ratio == 1230.0 / 4096.0);
    CHECK(find_sample(m.test, "a2_1_1").foreground_ratio == 328.0 / 4096.0);
    CHECK(find_sample(m.test, "f1_1_1").foreground_ratio == 819.0 / 4096.0);
    CHECK(find_sample(m.test, "d1_1_1").foreground_ratio == 164.0 / 4096.0);
    CHECK(find_sample(m.train, "c3_1_1").foreground_ratio == 300.0 / 4096.0);
    CHECK(find_sample(m.train, "a3_1_1").foreground_ratio == 600.0 / 4096.0);

    const auto& a1 = find_sample(m.test, "a1_1_1");
    CHECK(a1.subset == "HAdobe5k");
    CHECK(fs::path(a1.mask_path).filename() == "a1_1.png");
    CHECK(fs::path(a1.real_path).filename() == "a1.png");  // .jpg fallback hit
    for (const auto& s : m.test) {
        CHECK(fs::exists(s.composite_path));
        CHECK(fs::exists(s.mask_path));
        CHECK(fs::exists(s.real_path));
    }
}

TEST_CASE("ratio buckets use half-open boundaries at 5% and 15%") {
    CHECK(bucket_of(0.004) == "0-5%");
    CHECK(bucket_of(0.0499) == "0-5%");
    CHECK(bucket_of(0.05) == "5-15%");
    CHECK(bucket_of(0.1499) == "5-15%");
    CHECK(bucket_of(0.15) == "15-100%");
    CHECK(bucket_of(1.0) == "15-100%");
    CHECK_THROWS_AS(bucket_of(0.0), ParamError);
    CHECK_THROWS_AS(bucket_of(-0.1), ParamError);
    CHECK_THROWS_AS(bucket_of(1.0001), ParamError);
}

TEST_CASE("mask_foreground_ratio validates its input") {
    torch::Tensor mask = torch::zeros({1, 8, 8});
    CHECK_THROWS_AS(mask_foreground_ratio(mask), ValidationError);
    mask.index_put_({0, 0, torch::indexing::Slice(0, 4)}, 1.0);
    CHECK(mask_foreground_ratio(mask) == 4.0 / 64.0);
    CHECK_THROWS_AS(mask_foreground_ratio(torch::full({1, 4, 4}, 0.5f)), ParamError);
    CHECK_THROWS_AS(mask_foreground_ratio(torch::empty({1, 0, 0})), ParamError);
}

TEST_CASE("missing companion files fail with every offender listed") {
    fs::path root = temp_dir("ds_missing");
    fs::path subset = root / "HCOCO";
    write_triplet(subset, "x1");
    // a second composite with no mask or real image
    torch::Tensor img = torch::full({3, 16, 16}, 0.25f);
    save_image((subset / "composite_images" / "x2_1_1.png").string(), img);
    std::ofstream(subset / "HCOCO_test.txt") << "x1_1_1.png\nx2_1_1.png\n";

    try {
        load_iharmony4(root.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("x2_1.png") != std::string::npos);
        CHECK(what.find("x2.jpg") != std::string::npos);
        CHECK(what.find("x1") == std::string::npos);  // the good one is not blamed
    }
}

TEST_CASE("malformed composite names are skipped, not fatal") {
    fs::path root = temp_dir("ds_malformed");
    fs::path subset = root / "HCOCO";
    write_triplet(subset, "x1");
    std::ofstream(subset / "HCOCO_test.txt") << "x1_1_1.png\nweird.png\n\n";
    SplitManifest m = load_iharmony4(root.string());
    CHECK(m.test.size() == 1);
    CHECK(m.test[0].id == "x1_1_1");
}

TEST_CASE("bad roots raise DataError") {
    CHECK_THROWS_AS(load_iharmony4("/definitely/not/here"), DataError);
    fs::path empty = temp_dir("ds_empty");
    CHECK_THROWS_AS(load_iharmony4(empty.string()), DataError);
}

TEST_CASE("load_sample returns aligned unit-range triplets") {
    SplitManifest m = load_iharmony4(kFixtureRoot);
    SampleImages s = load_sample(find_sample(m.test, "c1_1_1"));
    CHECK(s.composite.sizes() == torch::IntArrayRef({3, 64, 64}));
    CHECK(s.mask.sizes() == torch::IntArrayRef({1, 64, 64}));
    CHECK(s.real.sizes() == torch::IntArrayRef({3, 64, 64}));
    CHECK(s.composite.min().item<float>() >= 0.0f);
    CHECK(s.composite.max().item<float>() <= 1.0f);
    CHECK(((s.mask == 0.0).logical_or(s.mask == 1.0)).all().item<bool>());
    // fixture composites shift brightness inside the mask only
    CHECK(((s.composite - s.real).abs() * (1.0 - s.mask)).sum().item<double>() == 0.0);
    CHECK(((s.composite - s.real).abs() * s.mask).sum().item<double>() > 0.0);
}

TEST_CASE("load_sample rejects size mismatches across the triplet") {
    fs::path root = temp_dir("ds_mismatch");
    fs::path subset = root / "HCOCO";
    write_triplet(subset, "x1");
    save_image((subset / "real_images" / "x1.png").string(), torch::full({3, 8, 8}, 0.5f));
    std::ofstream(subset / "HCOCO_test.txt") << "x1_1_1.png\n";
    SplitManifest m = load_iharmony4(root.string());
    CHECK_THROWS_AS(load_sample(m.test[0]), DataError);
}

TEST_CASE("augment is deterministic per generator seed") {
    SplitManifest m = load_iharmony4(kFixtureRoot);
    SampleImages s = load_sample(find_sample(m.test, "a1_1_1"));
    AugmentConfig cfg;
    cfg.resolution = 32;

    torch::Generator g1 = make_generator(123), g2 = make_generator(123);
    SampleImages o1 = augment(s, cfg, g1), o2 = augment(s, cfg, g2);
    CHECK(o1.composite.equal(o2.composite));
    CHECK(o1.mask.equal(o2.mask));
    CHECK(o1.real.equal(o2.real));

    torch::Generator g3 = make_generator(124);
    SampleImages o3 = augment(s, cfg, g3);
    CHECK_FALSE(o1.composite.equal(o3.composite));
}

TEST_CASE("augment keeps masks binary and foreground alive") {
    SplitManifest m = load_iharmony4(kFixtureRoot);
    SampleImages s = load_sample(find_sample(m.test, "c1_1_1"));  // smallest foreground
    AugmentConfig cfg;
    cfg.resolution = 48;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        torch::Generator gen = make_generator(seed);
        SampleImages o = augment(s, cfg, gen);
        CHECK(o.composite.sizes() == torch::IntArrayRef({3, 48, 48}));
        CHECK(o.mask.sizes() == torch::IntArrayRef({1, 48, 48}));
        CHECK(((o.mask == 0.0).logical_or(o.mask == 1.0)).all().item<bool>());
        CHECK(o.mask.sum().item<double>() > 0.0);
        CHECK(o.composite.min().item<float>() >= 0.0f);
        CHECK(o.composite.max().item<float>() <= 1.0f);
    }
}

TEST_CASE("identity-crop augment with certain flip mirrors the resize") {
    SplitManifest m = load_iharmony4(kFixtureRoot);
    SampleImages s = load_sample(find_sample(m.test, "c2_1_1"));
    AugmentConfig cfg;
    cfg.crop_scale_min = cfg.crop_scale_max = 1.0;
    cfg.aspect_min = cfg.aspect_max = 1.0;
    cfg.flip_p = 1.0;
    cfg.resolution = 32;
    torch::Generator gen = make_generator(5);
    SampleImages o = augment(s, cfg, gen);
    torch::Tensor want = torch::flip(resize_bicubic(s.composite, 32, 32).clamp(0.0, 1.0), {2});
    CHECK(o.composite.equal(want));
    CHECK(o.mask.equal(torch::flip(resize_nearest(s.mask, 32, 32), {2})));
}

TEST_CASE("augment rejects broken configs") {
    SampleImages s;
    s.composite = torch::rand({3, 16, 16});
    s.mask = torch::ones({1, 16, 16});
    s.real = torch::rand({3, 16, 16});
    torch::Generator gen = make_generator(0);
    AugmentConfig cfg;

    cfg.crop_scale_min = 0.0;
    CHECK_THROWS_AS(augment(s, cfg, gen), ParamError);
    cfg = AugmentConfig{};
    cfg.aspect_min = 2.0;
    cfg.aspect_max = 1.0;
    CHECK_THROWS_AS(augment(s, cfg, gen), ParamError);
    cfg = AugmentConfig{};
    cfg.flip_p = 1.5;
    CHECK_THROWS_AS(augment(s, cfg, gen), ParamError);
    cfg = AugmentConfig{};
    cfg.resolution = 0;
    CHECK_THROWS_AS(augment(s, cfg, gen), ParamError);
}

TEST_CASE("procedural bases are deterministic and inside their value band") {
    auto a = make_procedural_bases(4, 32, 77);
    auto b = make_procedural_bases(4, 32, 77);
    auto c = make_procedural_bases(4, 32, 78);
    REQUIRE(a.size() == 4);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].sizes() == torch::IntArrayRef({3, 32, 32}));
        CHECK(a[i].equal(b[i]));
        CHECK(a[i].min().item<float>() >= 0.02f);
        CHECK(a[i].max().item<float>() <= 0.98f);
    }
    CHECK_FALSE(a[0].equal(c[0]));
    CHECK_THROWS_AS(make_procedural_bases(0, 32, 1), ParamError);
    CHECK_THROWS_AS(make_procedural_bases(2, 4, 1), ParamError);
}

TEST_CASE("synthetic set round trips through the directory loader") {
    fs::path root = temp_dir("ds_synth");
    auto bases = make_procedural_bases(6, 32, 21);
    SyntheticConfig cfg;
    cfg.train_count = 6;
    cfg.test_count = 3;
    cfg.resolution = 32;
    cfg.seed = 42;
    SplitManifest made = make_synthetic_set(bases, root.string(), cfg);
    CHECK(made.train.size() == 6);
    CHECK(made.test.size() == 3);
    CHECK(fs::exists(root / "synthetic" / "generator_params.json"));

    SplitManifest loaded = load_iharmony4(root.string());
    CHECK(loaded.train.size() == 6);
    CHECK(loaded.test.size() == 3);
    CHECK(loaded.train_counts.at("synthetic") == 6);

    for (const auto& s : loaded.test) {
        SampleImages im = load_sample(s);
        CHECK(((im.mask == 0.0).logical_or(im.mask == 1.0)).all().item<bool>());
        CHECK(s.foreground_ratio > 0.0);
        CHECK(s.foreground_ratio <= 1.0);
        // the harmonization target differs from the composite inside the mask
        CHECK(((im.composite - im.real).abs() * im.mask).sum().item<double>() > 0.0);
        CHECK(((im.composite - im.real).abs() * (1.0 - im.mask)).sum().item<double>() == 0.0);
    }
    CHECK_THROWS_AS(make_synthetic_set({}, root.string(), cfg), ParamError);
}

}  // TEST_SUITE
