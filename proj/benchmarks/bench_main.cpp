#include <benchmark/benchmark.h>

#include "unlab/attack.hpp"
#include "unlab/data.hpp"
#include "unlab/defense.hpp"
#include "unlab/features.hpp"
#include "unlab/nn.hpp"

namespace {

using namespace unlab;

ModelSpec desk_spec() {
    ModelSpec spec;
    spec.layer_sizes = {20, 64, 64, 10};
    return spec;
}

void bm_forward(benchmark::State& state) {
    const Dataset data = generate_blobs(10, 20, 20, 0.55, 7);
    const ModelParams params = make_model(desk_spec(), 1);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(params, data.features.row(i % data.size()), data.dim()));
        ++i;
    }
}
BENCHMARK(bm_forward);

void bm_train_epoch(benchmark::State& state) {
    const Dataset data = generate_blobs(10, 20, 50, 0.55, 7);
    const ModelParams params = make_model(desk_spec(), 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 3;
    for (auto _ : state) benchmark::DoNotOptimize(train(params, data, cfg));
}
BENCHMARK(bm_train_epoch)->Unit(benchmark::kMillisecond);

void bm_per_example_gradients(benchmark::State& state) {
    const Dataset data = generate_blobs(10, 20, 10, 0.55, 7);
    const ModelParams params = make_model(desk_spec(), 1);
    std::vector<int> batch(64);
    for (int i = 0; i < 64; ++i) batch[static_cast<std::size_t>(i)] = i;
    for (auto _ : state) benchmark::DoNotOptimize(per_example_gradients(params, data, batch));
}
BENCHMARK(bm_per_example_gradients)->Unit(benchmark::kMillisecond);

void bm_derive_features(benchmark::State& state) {
    PosteriorVector p{{0.5, 0.2, 0.1, 0.05, 0.05, 0.02, 0.02, 0.02, 0.02, 0.02}};
    PosteriorVector pu{{0.3, 0.3, 0.1, 0.05, 0.05, 0.05, 0.05, 0.04, 0.03, 0.03}};
    FeatureMode mode;
    mode.kind = FeatureKind::Cds;
    for (auto _ : state) benchmark::DoNotOptimize(derive_features(p, pu, 0, mode));
}
BENCHMARK(bm_derive_features);

void bm_compute_epsilon(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(compute_epsilon(1.0, 1000, 0.01, 5e-4));
}
BENCHMARK(bm_compute_epsilon)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
