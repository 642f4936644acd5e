#include "testing.hpp"

#include <string>
#include <vector>

#include "harmony/errors.hpp"
#include "harmony/image.hpp"
#include "harmony/pipeline.hpp"
#include "harmony/rng.hpp"

using namespace harmony;

namespace {

PipelineModels tiny_models() {
    torch::manual_seed(41);
    CodecSettings cs;
    cs.downsample_factor = 2;
    cs.latent_channels = 2;
    cs.base_channels = 8;
    cs.channel_mults = {1, 2};
    cs.scaling_factor = 1.0;

    DenoiserSettings ds;
    ds.latent_channels = 2;
    ds.base_channels = 8;
    ds.channel_mults = {1, 2};
    ds.attention_levels = {1};
    ds.num_res_blocks = 1;
    ds.num_heads = 2;
    ds.context_length = 3;
    ds.context_dim = 8;

    PipelineModels m;
    m.codec = LatentCodec(cs);
    m.denoiser = ConditionalDenoiser(ds);
    m.schedule = build_schedule(1000, 0.00085, 0.012);
    m.codec->eval();
    m.denoiser->eval();
    return m;
}

HarmonizationRequest tiny_request(uint64_t seed) {
    torch::Generator gen = make_generator(999);
    HarmonizationRequest req;
    req.composite = torch::rand({3, 16, 16}, gen);
    req.mask = torch::zeros({1, 16, 16});
    req.mask.index_put_({0, torch::indexing::Slice(0, 8), torch::indexing::Slice()}, 1.0);
    req.inference_resolution = 16;
    req.output_resolution = 16;
    req.sampler.num_inference_steps = 3;
    req.sampler.seed = seed;
    return req;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("harmonize returns unit-range images of the requested size, deterministically") {
    PipelineModels models = tiny_models();
    HarmonizationRequest req = tiny_request(5);
    req.output_resolution = 24;

    torch::Tensor a = harmonize(req, models);
    CHECK(a.sizes() == torch::IntArrayRef({3, 24, 24}));
    CHECK(a.min().item<float>() >= 0.0f);
    CHECK(a.max().item<float>() <= 1.0f);

    torch::Tensor b = harmonize(req, models);
    CHECK(a.equal(b));

    req.sampler.seed = 6;
    torch::Tensor c = harmonize(req, models);
    CHECK_FALSE(a.equal(c));
}

TEST_CASE("blending with an all-zero mask reproduces the composite exactly") {
    PipelineModels models = tiny_models();
    HarmonizationRequest req = tiny_request(3);
    req.mask = torch::zeros({1, 16, 16});
    torch::Tensor out = harmonize(req, models);
    CHECK(out.equal(req.composite));
}

TEST_CASE("background pixels pass through untouched when blending") {
    PipelineModels models = tiny_models();
    HarmonizationRequest req = tiny_request(4);  // top half foreground
    torch::Tensor out = harmonize(req, models);
    torch::Tensor bg = 1.0 - req.mask;
    CHECK(((out - req.composite).abs() * bg).max().item<float>() == 0.0f);
    // and the foreground half actually changed
    CHECK(((out - req.composite).abs() * req.mask).max().item<float>() > 0.0f);
}

TEST_CASE("disabling the blend produces a fully generated image") {
    PipelineModels models = tiny_models();
    HarmonizationRequest req = tiny_request(8);
    torch::Tensor blended = harmonize(req, models);
    req.blend_background = false;
    torch::Tensor raw = harmonize(req, models);
    CHECK_FALSE(blended.equal(raw));
    torch::Tensor bg = 1.0 - req.mask;
    CHECK(((raw - req.composite).abs() * bg).max().item<float>() > 0.0f);
}

TEST_CASE("request validation rejects malformed inputs") {
    PipelineModels models = tiny_models();
    HarmonizationRequest req = tiny_request(0);

    HarmonizationRequest bad = req;
    bad.mask = torch::full({1, 16, 16}, 0.5f);
    CHECK_THROWS_AS(harmonize(bad, models), ParamError);
    bad = req;
    bad.mask = torch::zeros({1, 8, 8});
    CHECK_THROWS_AS(harmonize(bad, models), ParamError);
    bad = req;
    bad.inference_resolution = 15;  // not a multiple of the codec factor
    CHECK_THROWS_AS(harmonize(bad, models), ParamError);
    bad = req;
    bad.composite = torch::rand({1, 16, 16});
    CHECK_THROWS_AS(harmonize(bad, models), ParamError);

    PipelineModels unloaded;
    unloaded.schedule = models.schedule;
    CHECK_THROWS_AS(harmonize(req, unloaded), ParamError);
}

TEST_CASE("batch harmonization seeds items as base + index and matches single runs") {
    PipelineModels models = tiny_models();
    std::vector<HarmonizationRequest> requests = {tiny_request(0), tiny_request(0),
                                                  tiny_request(0)};
    auto results = harmonize_batch(requests, models, 2, 100);
    REQUIRE(results.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(results[i].ok);
        CHECK(results[i].index == static_cast<int64_t>(i));
        CHECK(results[i].seed == 100 + i);
        HarmonizationRequest single = tiny_request(100 + i);
        CHECK(results[i].image.equal(harmonize(single, models)));
    }
}

TEST_CASE("one bad batch item fails alone") {
    PipelineModels models = tiny_models();
    std::vector<HarmonizationRequest> requests = {tiny_request(0), tiny_request(0),
                                                  tiny_request(0)};
    requests[1].mask = torch::zeros({1, 4, 4});  // size mismatch
    auto results = harmonize_batch(requests, models, 1, 7);
    CHECK(results[0].ok);
    CHECK_FALSE(results[1].ok);
    CHECK(results[1].error.find("mask") != std::string::npos);
    CHECK_FALSE(results[1].image.defined());
    CHECK(results[2].ok);

    CHECK_THROWS_AS(harmonize_batch({}, models, 1, 0), ParamError);
    CHECK_THROWS_AS(harmonize_batch(requests, models, 0, 0), ParamError);
}

TEST_CASE("a missing refiner degrades harmonize_refined to stage 1") {
    PipelineModels models = tiny_models();
    HarmonizationRequest req = tiny_request(12);
    req.output_resolution = 20;

    torch::Tensor stage1 = harmonize(req, models);
    CHECK(harmonize_refined(req, models, nullptr).equal(stage1));
    Refiner null_refiner{nullptr};
    CHECK(harmonize_refined(req, models, &null_refiner).equal(stage1));
}

TEST_CASE("a freshly initialized refiner is a no-op on the stage-1 output") {
    PipelineModels models = tiny_models();
    torch::manual_seed(19);
    RefinerSettings rs;
    rs.base_channels = 4;
    rs.num_stages = 2;
    Refiner refiner(rs);
    refiner->eval();

    HarmonizationRequest req = tiny_request(12);
    req.output_resolution = 256;  // match the refiner grid so no extra resample hides drift
    torch::Tensor refined = harmonize_refined(req, models, &refiner);
    torch::Tensor stage1 = harmonize(req, models);
    CHECK(refined.sizes() == stage1.sizes());
    // identity up to the signed/unit range round trip
    CHECK(torch::allclose(refined, stage1, 1e-5, 1e-6));
}

}  // TEST_SUITE
