#include <benchmark/benchmark.h>

#include "dwnet/bls.hpp"
#include "dwnet/dwnet.hpp"
#include "dwnet/hcn.hpp"
#include "dwnet/nn.hpp"

using namespace dwnet;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal();
    return t;
}

ClipTensors random_clip(const HcnConfig& c, Rng& rng) {
    return {random_tensor({c.persons, c.channels, c.frames, c.joints}, rng),
            random_tensor({c.persons, c.channels, c.frames, c.joints}, rng)};
}

void BM_Conv3x3(benchmark::State& state) {
    Rng rng(1);
    const auto ch = static_cast<std::size_t>(state.range(0));
    ConvLayer layer;
    layer.weights = random_tensor({ch, 15, 3, 3}, rng);
    layer.bias = Tensor({ch});
    layer.padding = {1, 1};
    const Tensor x = random_tensor({2, 15, 16, 32}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, layer));
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32);

void BM_RidgeFit(benchmark::State& state) {
    Rng rng(2);
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto cols = static_cast<std::size_t>(state.range(1));
    const Tensor a = random_tensor({n, cols}, rng);
    const Tensor y = random_tensor({n, 8}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(ridge_fit(a, y, 1e-8));
}
BENCHMARK(BM_RidgeFit)->Args({256, 614})->Args({1024, 614})->Unit(benchmark::kMillisecond);

void BM_BlsPredict(benchmark::State& state) {
    Rng rng(3);
    BlsConfig cfg;
    cfg.enhancement_nodes = static_cast<std::size_t>(state.range(0));
    const Tensor z = random_tensor({256, 64}, rng);
    std::vector<int> labels(256);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 8);
    const BlsHead head = bls_fit(z, labels, 8, cfg);
    const Tensor one = random_tensor({1, 64}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(bls_predict(head, one));
}
BENCHMARK(BM_BlsPredict)->Arg(550)->Arg(1100);

void BM_HcnForward(benchmark::State& state) {
    Rng rng(4);
    const HcnConfig cfg = HcnConfig::sbu();
    const HcnModel model = build_hcn(cfg, rng);
    const ClipTensors clip = random_clip(cfg, rng);
    for (auto _ : state) benchmark::DoNotOptimize(hcn_forward(model, clip, false, rng));
}
BENCHMARK(BM_HcnForward)->Unit(benchmark::kMillisecond);

void BM_PruHcnFeatures(benchmark::State& state) {
    Rng rng(5);
    const HcnConfig cfg = HcnConfig::sbu();
    const PruHcn model = random_pruhcn(cfg, rng);
    const ClipTensors clip = random_clip(cfg, rng);
    for (auto _ : state) benchmark::DoNotOptimize(pruhcn_features(model, clip));
}
BENCHMARK(BM_PruHcnFeatures)->Unit(benchmark::kMillisecond);

void BM_DwnetPredict(benchmark::State& state) {
    Rng rng(6);
    const HcnConfig cfg = HcnConfig::sbu();
    std::vector<ClipTensors> clips;
    std::vector<int> labels;
    for (int i = 0; i < 64; ++i) {
        clips.push_back(random_clip(cfg, rng));
        labels.push_back(i % static_cast<int>(cfg.num_classes));
    }
    const PruHcn pruhcn = random_pruhcn(cfg, rng);
    const DwnetModel model = dwnet_compose(pruhcn, pruhcn_features_batch(pruhcn, clips), labels, BlsConfig{});
    for (auto _ : state) benchmark::DoNotOptimize(dwnet_predict(model, clips.front()));
}
BENCHMARK(BM_DwnetPredict)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
