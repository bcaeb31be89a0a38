#include <benchmark/benchmark.h>

#include "nl2sql/blocks.hpp"

using namespace nl2sql;

namespace {

ad::Tensor filled(std::size_t r, std::size_t c, Rng& rng) {
  ad::Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

// Forward over a sequence of range(0) steps at hidden size range(1).
static void BM_LstmForward(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  const auto hidden = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  ad::ParamStore store;
  const auto p = LstmParams::create(store, "lstm", hidden, hidden, rng);
  const ad::Tensor xs = filled(steps, hidden, rng);
  for (auto _ : state) {
    ad::Graph g;
    benchmark::DoNotOptimize(lstm_sequence(g, g.constant(xs), p).value());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LstmForward)->Args({16, 32})->Args({64, 32})->Args({16, 128});

static void BM_LstmForwardBackward(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  const auto hidden = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  ad::ParamStore store;
  const auto p = LstmParams::create(store, "lstm", hidden, hidden, rng);
  const ad::Tensor xs = filled(steps, hidden, rng);
  for (auto _ : state) {
    store.zero_grad();
    ad::Graph g;
    g.backward(ad::sum(lstm_sequence(g, g.constant(xs), p)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LstmForwardBackward)->Args({16, 32})->Args({64, 32})->Args({16, 128});

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const ad::Tensor a = filled(n, n, rng), b = filled(n, n, rng);
  for (auto _ : state) {
    ad::Graph g;
    benchmark::DoNotOptimize(ad::matmul(g.constant(a), g.constant(b)).value());
  }
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

BENCHMARK_MAIN();
