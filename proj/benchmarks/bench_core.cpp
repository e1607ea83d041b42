#include <benchmark/benchmark.h>

#include <cia/attack.hpp>
#include <cia/dataset.hpp>
#include <cia/defenses.hpp>
#include <cia/network.hpp>
#include <cia/prng.hpp>

using namespace cia;

namespace {

Tensor bench_image(uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor img({32, 32, 3});
  for (int i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.next_unit());
  return quantize_roundtrip(img);
}

const Network& bench_network() {
  static Network net = make_reference_network(0, 7);
  return net;
}

}  // namespace

static void BM_Conv3x3(benchmark::State& state) {
  Tensor img = bench_image(1);
  SplitMix64 rng(2);
  Tensor kernel({3, 3, 3, 8});
  for (int i = 0; i < kernel.size(); ++i)
    kernel[i] = static_cast<float>(rng.next_unit() - 0.5);
  for (auto _ : state) {
    Tensor out = conv2d(img, kernel, Padding::Zero);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_Conv3x3);

static void BM_ForwardPass(benchmark::State& state) {
  Tensor img = bench_image(3);
  const Network& net = bench_network();
  for (auto _ : state) {
    ClassifierOutput out = net.forward(img);
    benchmark::DoNotOptimize(out.logits.data());
  }
}
BENCHMARK(BM_ForwardPass);

static void BM_InputGradient(benchmark::State& state) {
  Tensor img = bench_image(4);
  const Network& net = bench_network();
  Tensor seed({10});
  seed[3] = 1.0f;
  for (auto _ : state) {
    Tensor g = net.backward_input(img, seed);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_InputGradient);

static void BM_CraftAttack(benchmark::State& state) {
  Tensor img = bench_image(5);
  const Network& net = bench_network();
  ObjectiveSpec objective;
  objective.composition = Composition::Single;
  objective.terms.push_back(ObjectiveTerm{&net, false, 1.0f});
  AttackConfig config;
  config.iterations = static_cast<int>(state.range(0));
  config.budget = PerturbationBudget::uniform(img.shape(), 16.0f / 255.0f);
  config.mode.targeted = true;
  config.mode.true_class = net.forward(img).predicted_class;
  config.mode.target_class = (config.mode.true_class + 1) % 10;
  for (auto _ : state) {
    AttackResult res = craft(img, config, objective);
    benchmark::DoNotOptimize(res.adversarial.data());
  }
}
BENCHMARK(BM_CraftAttack)->Arg(5)->Arg(20);

static void BM_MeanFilter(benchmark::State& state) {
  Tensor img = bench_image(6);
  SmoothingSpec spec{static_cast<int>(state.range(0)), Padding::Replicate};
  for (auto _ : state) {
    Tensor out = mean_filter(img, spec);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_MeanFilter)->Arg(3)->Arg(5);

static void BM_JpegRoundTrip(benchmark::State& state) {
  Tensor img = bench_image(7);
  JpegCodecSpec spec{static_cast<int>(state.range(0))};
  for (auto _ : state) {
    Tensor out = jpeg_encode_decode(img, spec);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_JpegRoundTrip)->Arg(80)->Arg(20);

static void BM_RenderDatasetSample(benchmark::State& state) {
  int i = 0;
  for (auto _ : state) {
    Dataset ds = generate_dataset(100 + i++, 1, 0);
    benchmark::DoNotOptimize(ds.train.images[0].data());
  }
}
BENCHMARK(BM_RenderDatasetSample);

BENCHMARK_MAIN();
