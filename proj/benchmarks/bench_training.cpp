#include <benchmark/benchmark.h>

#include "nl2sql/datagen.hpp"
#include "nl2sql/eval.hpp"
#include "nl2sql/models.hpp"
#include "nl2sql/training.hpp"

using namespace nl2sql;

namespace {

struct Fixture {
  Dataset d;
  std::unique_ptr<Model> model;
  std::vector<Prepared> prepared;
  std::vector<const Prepared*> batch;

  Fixture(ModelKind kind, std::size_t batch_size) {
    d = build_dataset(filter_tables(synthesize_tables(30, 7)), 6, SplitRatio{1.0, 0.0, 0.0}, 7);
    ModelConfig cfg;
    cfg.kind = kind;
    model = Model::create(cfg, build_vocabulary(d.train, d), build_target_vocabulary(d.train, d), 7);
    for (std::size_t i = 0; i < batch_size && i < d.train.size(); ++i) {
      prepared.push_back(model->prepare(d.train[i], d.table(d.train[i].table_id)));
    }
    for (const auto& p : prepared) batch.push_back(&p);
  }
};

}  // namespace

// One optimizer step on a 16-example batch at the default d=32 configuration.
static void BM_SupervisedStep(benchmark::State& state) {
  Fixture f(static_cast<ModelKind>(state.range(0)), 16);
  TrainConfig cfg;
  Adam opt(cfg.lr);
  std::uint64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(mixed_step(*f.model, f.batch, cfg, opt, step++));
  state.SetItemsProcessed(state.iterations() * 16);
  state.SetLabel(std::string(to_string(f.model->kind())));
}
BENCHMARK(BM_SupervisedStep)
    ->Arg(static_cast<int>(ModelKind::AugPtr))
    ->Arg(static_cast<int>(ModelKind::Seq2Sql))
    ->Arg(static_cast<int>(ModelKind::Baseline))
    ->Unit(benchmark::kMillisecond);

static void BM_PolicyGradientStep(benchmark::State& state) {
  Fixture f(ModelKind::Seq2Sql, 16);
  TrainConfig cfg;
  cfg.phase = Phase::RL;
  Adam opt(cfg.lr);
  std::uint64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(mixed_step(*f.model, f.batch, cfg, opt, step++));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_PolicyGradientStep)->Unit(benchmark::kMillisecond);

// Greedy decoding for the pointer models, beam search for the baseline.
static void BM_Predict(benchmark::State& state) {
  Fixture f(static_cast<ModelKind>(state.range(0)), 16);
  for (auto _ : state) {
    for (const auto& p : f.prepared) benchmark::DoNotOptimize(f.model->predict(p));
  }
  state.SetItemsProcessed(state.iterations() * 16);
  state.SetLabel(std::string(to_string(f.model->kind())));
}
BENCHMARK(BM_Predict)
    ->Arg(static_cast<int>(ModelKind::AugPtr))
    ->Arg(static_cast<int>(ModelKind::Seq2Sql))
    ->Arg(static_cast<int>(ModelKind::Baseline))
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
