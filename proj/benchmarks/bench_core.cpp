// Microbenchmarks for the hot paths: schedule construction, one sampler
// step, the pixel metrics, and single forward passes of the three models.
// Single-threaded torch so numbers stay comparable across machines.

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "harmony/codec.hpp"
#include "harmony/denoiser.hpp"
#include "harmony/metrics.hpp"
#include "harmony/refiner.hpp"
#include "harmony/rng.hpp"
#include "harmony/sampler.hpp"
#include "harmony/schedule.hpp"

using namespace harmony;

namespace {

void BM_BuildSchedule(benchmark::State& state) {
    for (auto _ : state) {
        NoiseSchedule s = build_schedule();
        benchmark::DoNotOptimize(s.sigmas.data());
    }
}
BENCHMARK(BM_BuildSchedule);

void BM_EulerAncestralStep(benchmark::State& state) {
    const int64_t n = state.range(0);
    torch::Generator gen = make_generator(1);
    torch::Tensor x = torch::randn({1, 4, n, n}, gen) * 10.0;
    torch::Tensor eps = torch::randn({1, 4, n, n}, gen);
    torch::Tensor noise = torch::randn({1, 4, n, n}, gen);
    for (auto _ : state)
        benchmark::DoNotOptimize(euler_ancestral_step(x, eps, 10.0, 5.0, noise));
    state.SetItemsProcessed(state.iterations() * 4 * n * n);
}
BENCHMARK(BM_EulerAncestralStep)->Arg(8)->Arg(32)->Arg(64);

void BM_Mse(benchmark::State& state) {
    const int64_t n = state.range(0);
    torch::Generator gen = make_generator(2);
    torch::Tensor a = torch::rand({3, n, n}, gen) * 255.0;
    torch::Tensor b = torch::rand({3, n, n}, gen) * 255.0;
    for (auto _ : state) benchmark::DoNotOptimize(mse(a, b));
    state.SetItemsProcessed(state.iterations() * 3 * n * n);
}
BENCHMARK(BM_Mse)->Arg(256)->Arg(512);

void BM_Fmse(benchmark::State& state) {
    const int64_t n = state.range(0);
    torch::Generator gen = make_generator(3);
    torch::Tensor a = torch::rand({3, n, n}, gen) * 255.0;
    torch::Tensor b = torch::rand({3, n, n}, gen) * 255.0;
    torch::Tensor m = (torch::rand({1, n, n}, gen) < 0.2).to(torch::kFloat32);
    for (auto _ : state) benchmark::DoNotOptimize(fmse(a, b, m));
    state.SetItemsProcessed(state.iterations() * 3 * n * n);
}
BENCHMARK(BM_Fmse)->Arg(256)->Arg(512);

void BM_CodecEncode(benchmark::State& state) {
    torch::NoGradGuard ng;
    torch::manual_seed(4);
    CodecSettings s;
    s.base_channels = 16;
    s.scaling_factor = 1.0;
    LatentCodec codec(s);
    codec->eval();
    const int64_t n = state.range(0);
    torch::Tensor img = torch::rand({1, 3, n, n}) * 2.0 - 1.0;
    for (auto _ : state) benchmark::DoNotOptimize(codec->encode(img));
}
BENCHMARK(BM_CodecEncode)->Arg(64)->Arg(256);

void BM_DenoiserForward(benchmark::State& state) {
    torch::NoGradGuard ng;
    torch::manual_seed(5);
    DenoiserSettings s;
    s.latent_channels = 4;
    s.base_channels = 48;
    ConditionalDenoiser model(s);
    model->eval();
    torch::Tensor x = torch::randn({1, s.input_channels(), 8, 8});
    torch::Tensor t = torch::full({1}, 500, torch::kLong);
    torch::Tensor ctx = model->null_context().unsqueeze(0);
    for (auto _ : state) benchmark::DoNotOptimize(model->forward(x, t, ctx));
}
BENCHMARK(BM_DenoiserForward);

void BM_RefinerForward(benchmark::State& state) {
    torch::NoGradGuard ng;
    torch::manual_seed(6);
    Refiner model{RefinerSettings{}};
    model->eval();
    torch::Tensor h = torch::rand({1, 3, 256, 256}) * 2.0 - 1.0;
    torch::Tensor c = torch::rand({1, 3, 256, 256}) * 2.0 - 1.0;
    torch::Tensor m = (torch::rand({1, 1, 256, 256}) < 0.5).to(torch::kFloat32);
    for (auto _ : state) benchmark::DoNotOptimize(model->forward(h, c, m));
}
BENCHMARK(BM_RefinerForward);

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    return 0;
}
