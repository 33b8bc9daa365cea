#include <benchmark/benchmark.h>

#include "cpl/loss.hpp"
#include "cpl/net.hpp"
#include "cpl/proto.hpp"
#include "cpl/rng.hpp"

namespace {

using namespace cpl;

Batch random_batch(const ImageShape& shape, std::size_t n) {
  Rng rng(1);
  Batch b;
  b.shape = shape;
  b.pixels.resize(n * shape.size());
  for (double& v : b.pixels) v = rng.uniform();
  return b;
}

void BM_Forward(benchmark::State& state) {
  const NetParams params = init_network(ArchSpec::mnist_default(2), 0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Batch batch = random_batch(params.arch.input(), n);
  for (auto _ : state) benchmark::DoNotOptimize(extract_features(params, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const NetParams params = init_network(ArchSpec::mnist_default(2), 0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Batch batch = random_batch(params.arch.input(), n);
  FeatureBatch upstream(n, 2);
  std::fill(upstream.data.begin(), upstream.data.end(), 0.5);
  for (auto _ : state) {
    const ForwardResult fw = forward(params, batch);
    benchmark::DoNotOptimize(backward(params, fw.cache, upstream));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(50)->Unit(benchmark::kMillisecond);

template <LossKind Kind>
void BM_CombinedLoss(benchmark::State& state) {
  Rng rng(2);
  const auto K = static_cast<std::size_t>(state.range(0));
  std::vector<double> values(10 * K * 2);
  for (double& v : values) v = rng.normal();
  const PrototypeBank bank(10, K, 2, values);
  const std::vector<double> f{0.3, -0.2};
  LossHyper hyper;
  for (auto _ : state) benchmark::DoNotOptimize(combined_loss_grad(Kind, f, 3, bank, hyper));
}
BENCHMARK(BM_CombinedLoss<LossKind::dce>)->Arg(1)->Arg(3);
BENCHMARK(BM_CombinedLoss<LossKind::mcl>)->Arg(1)->Arg(3);

void BM_Predict(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> values(10 * 3 * 2);
  for (double& v : values) v = rng.normal();
  const PrototypeBank bank(10, 3, 2, values);
  const std::vector<double> f{0.3, -0.2};
  for (auto _ : state) benchmark::DoNotOptimize(predict(bank, f));
}
BENCHMARK(BM_Predict);

}  // namespace
BENCHMARK_MAIN();
