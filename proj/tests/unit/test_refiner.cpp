#include "testing.hpp"

#include "harmony/errors.hpp"
#include "harmony/refiner.hpp"
#include "harmony/rng.hpp"

using namespace harmony;

TEST_SUITE("refiner") {

TEST_CASE("fresh refiner is the identity on its harmonized input") {
    RefinerSettings s;
    s.base_channels = 8;
    s.num_stages = 4;
    Refiner model(s);
    model->eval();
    torch::NoGradGuard ng;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        torch::Generator gen = make_generator(seed);
        torch::Tensor h = torch::rand({1, 3, 256, 256}, gen) * 2.0 - 1.0;
        torch::Tensor c = torch::rand({1, 3, 256, 256}, gen) * 2.0 - 1.0;
        torch::Tensor m = (torch::rand({1, 1, 256, 256}, gen) > 0.5).to(torch::kFloat);
        torch::Tensor out = model->forward(h, c, m);
        CHECK(out.equal(h));
        CHECK(model->residual(h, c, m).abs().max().item<double>() == 0.0);
    }
}

TEST_CASE("output is clamped to the signed range") {
    Refiner model((RefinerSettings()));
    // push a weight so the residual is nonzero, then check bounds
    torch::NoGradGuard ng;
    for (auto& p : model->parameters()) p.fill_(0.1);
    torch::Tensor h = torch::ones({1, 3, 256, 256}) * 0.99;
    torch::Tensor c = torch::zeros({1, 3, 256, 256});
    torch::Tensor m = torch::ones({1, 1, 256, 256});
    torch::Tensor out = model->forward(h, c, m);
    CHECK(out.max().item<double>() <= 1.0);
    CHECK(out.min().item<double>() >= -1.0);
    CHECK_FALSE(out.equal(h));
}

TEST_CASE("unbatched inputs round trip as 3D tensors") {
    Refiner model((RefinerSettings()));
    model->eval();
    torch::NoGradGuard ng;
    torch::Tensor h = torch::zeros({3, 256, 256});
    torch::Tensor c = torch::zeros({3, 256, 256});
    torch::Tensor m = torch::ones({1, 256, 256});
    torch::Tensor out = refine(h, c, m, model);
    CHECK(out.sizes() == torch::IntArrayRef({3, 256, 256}));
    CHECK(out.equal(h));
}

TEST_CASE("shape contract is enforced") {
    Refiner model((RefinerSettings()));
    torch::NoGradGuard ng;
    torch::Tensor ok_h = torch::zeros({1, 3, 256, 256});
    torch::Tensor ok_m = torch::ones({1, 1, 256, 256});
    CHECK_THROWS_AS(model->forward(torch::zeros({1, 3, 128, 128}), torch::zeros({1, 3, 128, 128}),
                                   torch::ones({1, 1, 128, 128})),
                    ParamError);
    CHECK_THROWS_AS(model->forward(ok_h, ok_h, torch::ones({1, 3, 256, 256})), ParamError);
    CHECK_THROWS_AS(model->forward(ok_h, torch::zeros({1, 3, 256, 128}), ok_m), ParamError);
}

TEST_CASE("settings validation") {
    RefinerSettings s;
    s.base_channels = 0;
    CHECK_THROWS_AS(Refiner{s}, ParamError);
    s = RefinerSettings();
    s.num_stages = 0;
    CHECK_THROWS_AS(Refiner{s}, ParamError);
}

}  // TEST_SUITE
