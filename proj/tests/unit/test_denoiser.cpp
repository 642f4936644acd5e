#include "testing.hpp"

#include "harmony/denoiser.hpp"
#include "harmony/errors.hpp"
#include "harmony/rng.hpp"

using namespace harmony;

namespace {

DenoiserSettings tiny_settings() {
    DenoiserSettings s;
    s.latent_channels = 2;
    s.base_channels = 8;
    s.channel_mults = {1, 2};
    s.attention_levels = {1};
    s.num_res_blocks = 1;
    s.num_heads = 2;
    s.context_length = 3;
    s.context_dim = 8;
    return s;
}

}  // namespace

TEST_SUITE("denoiser") {

TEST_CASE("cfg_combine guidance identities hold exactly") {
    torch::Generator gen = make_generator(1);
    torch::Tensor a = torch::randn({2, 4, 8, 8}, gen);
    torch::Tensor b = torch::randn({2, 4, 8, 8}, gen);
    CHECK(cfg_combine(a, b, 0.0).equal(a));
    CHECK(cfg_combine(a, a, 0.7).equal(a));
    CHECK(cfg_combine(a, a, 3.0).equal(a));
}

TEST_CASE("cfg_combine scalar case (2, 1, w=1) gives 3") {
    torch::Tensor cond = torch::tensor({2.0f});
    torch::Tensor uncond = torch::tensor({1.0f});
    torch::Tensor out = cfg_combine(cond, uncond, 1.0);
    CHECK(out.item<double>() == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("cfg_combine rejects bad arguments") {
    torch::Tensor a = torch::zeros({2, 3});
    torch::Tensor b = torch::zeros({2, 4});
    CHECK_THROWS_AS(cfg_combine(a, b, 1.0), ParamError);
    CHECK_THROWS_AS(cfg_combine(a, a, -0.5), ParamError);
}

TEST_CASE("forward produces latent-shaped output") {
    ConditionalDenoiser model(tiny_settings());
    model->eval();
    torch::NoGradGuard ng;
    torch::Tensor input = torch::randn({2, 5, 8, 8});
    torch::Tensor ts = torch::full({2}, 10, torch::kLong);
    torch::Tensor out = model->forward(input, ts, torch::Tensor());
    CHECK(out.sizes() == torch::IntArrayRef({2, 2, 8, 8}));
    CHECK(out.isfinite().all().item<bool>());
}

TEST_CASE("forward is deterministic in eval mode") {
    ConditionalDenoiser model(tiny_settings());
    model->eval();
    torch::NoGradGuard ng;
    torch::Generator gen = make_generator(4);
    torch::Tensor input = torch::randn({1, 5, 8, 8}, gen);
    torch::Tensor ts = torch::full({1}, 500, torch::kLong);
    torch::Tensor a = model->forward(input, ts, torch::Tensor());
    torch::Tensor b = model->forward(input, ts, torch::Tensor());
    CHECK(a.equal(b));
}

TEST_CASE("null context is a stable learned constant") {
    ConditionalDenoiser model(tiny_settings());
    torch::Tensor c1 = model->null_context();
    torch::Tensor c2 = model->null_context();
    CHECK(c1.data_ptr() == c2.data_ptr());
    CHECK(c1.sizes() == torch::IntArrayRef({3, 8}));
    CHECK(null_text_embedding(model).data_ptr() == c1.data_ptr());
}

TEST_CASE("empty text condition equals the explicit null context") {
    ConditionalDenoiser model(tiny_settings());
    model->eval();
    torch::NoGradGuard ng;
    torch::Generator gen = make_generator(9);
    DenoiserInput in;
    in.noisy_latent = torch::randn({2, 2, 8, 8}, gen);
    in.mask_lowres = (torch::rand({2, 1, 8, 8}, gen) > 0.5).to(torch::kFloat);
    in.composite_latent = torch::randn({2, 2, 8, 8}, gen);
    in.timestep = 123;
    torch::Tensor implicit = predict_noise(in, model);
    in.text_condition = model->null_context().unsqueeze(0).expand({2, 3, 8});
    torch::Tensor explicit_ctx = predict_noise(in, model);
    CHECK(implicit.equal(explicit_ctx));
}

TEST_CASE("predict_noise validates the channel contract") {
    ConditionalDenoiser model(tiny_settings());
    torch::NoGradGuard ng;
    DenoiserInput in;
    in.noisy_latent = torch::randn({1, 2, 8, 8});
    in.mask_lowres = torch::zeros({1, 1, 8, 8});
    in.composite_latent = torch::randn({1, 2, 8, 8});
    in.timestep = 0;

    SUBCASE("well-formed input passes") {
        CHECK(predict_noise(in, model).sizes() == torch::IntArrayRef({1, 2, 8, 8}));
    }
    SUBCASE("mask with 2 channels") {
        in.mask_lowres = torch::zeros({1, 2, 8, 8});
        CHECK_THROWS_AS(predict_noise(in, model), ParamError);
    }
    SUBCASE("composite latent channel mismatch") {
        in.composite_latent = torch::randn({1, 3, 8, 8});
        CHECK_THROWS_AS(predict_noise(in, model), ParamError);
    }
    SUBCASE("spatial mismatch") {
        in.mask_lowres = torch::zeros({1, 1, 4, 4});
        CHECK_THROWS_AS(predict_noise(in, model), ParamError);
    }
    SUBCASE("timestep out of range") {
        in.timestep = 1000;
        CHECK_THROWS_AS(predict_noise(in, model), ParamError);
        in.timestep = -1;
        CHECK_THROWS_AS(predict_noise(in, model), ParamError);
    }
}

TEST_CASE("predict_noise accepts unbatched inputs") {
    ConditionalDenoiser model(tiny_settings());
    torch::NoGradGuard ng;
    DenoiserInput in;
    in.noisy_latent = torch::randn({2, 8, 8});
    in.mask_lowres = torch::zeros({1, 8, 8});
    in.composite_latent = torch::randn({2, 8, 8});
    in.timestep = 42;
    torch::Tensor out = predict_noise(in, model);
    CHECK(out.sizes() == torch::IntArrayRef({2, 8, 8}));
}

TEST_CASE("settings validation") {
    DenoiserSettings s = tiny_settings();
    s.num_heads = 3;  // must divide every attention width
    CHECK_THROWS_AS(ConditionalDenoiser{s}, ParamError);
    s = tiny_settings();
    s.attention_levels = {5};
    CHECK_THROWS_AS(ConditionalDenoiser{s}, ParamError);
    s = tiny_settings();
    CHECK(s.input_channels() == 5);
}

}  // TEST_SUITE
