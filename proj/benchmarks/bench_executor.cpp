#include <benchmark/benchmark.h>

#include "nl2sql/datagen.hpp"
#include "nl2sql/sql.hpp"

using namespace nl2sql;

namespace {

Table wide_table(std::size_t rows) {
  std::vector<std::vector<std::string>> cells;
  for (std::size_t r = 0; r < rows; ++r) {
    cells.push_back({"team " + std::to_string(r % 17), std::to_string(r % 101), "city " + std::to_string(r % 7),
                     std::to_string(r * 3 % 59), "player " + std::to_string(r)});
  }
  return make_table("wide", {"Team", "Score", "City", "Round", "Player"}, cells);
}

}  // namespace

static void BM_ExecuteFilterCount(benchmark::State& state) {
  const Table t = wide_table(static_cast<std::size_t>(state.range(0)));
  const Query q{AggOp::Count, 4,
                {Condition{0, CondOp::Eq, Value::text("team 3")}, Condition{1, CondOp::Gt, Value::number(40)}}};
  for (auto _ : state) benchmark::DoNotOptimize(execute(q, t));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExecuteFilterCount)->Range(8, 8 << 10);

static void BM_ExecuteMax(benchmark::State& state) {
  const Table t = wide_table(static_cast<std::size_t>(state.range(0)));
  const Query q{AggOp::Max, 3, {Condition{2, CondOp::Eq, Value::text("city 2")}}};
  for (auto _ : state) benchmark::DoNotOptimize(execute(q, t));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExecuteMax)->Range(8, 8 << 10);

static void BM_ParseAndSerialize(benchmark::State& state) {
  const Table t = wide_table(4);
  const std::string text = "SELECT COUNT Player FROM table WHERE Team = 'team 3' AND Score > 40";
  for (auto _ : state) benchmark::DoNotOptimize(serialize_query(parse_query(text, t.header), t.header));
}
BENCHMARK(BM_ParseAndSerialize);

static void BM_SampleQuery(benchmark::State& state) {
  const auto tables = filter_tables(synthesize_tables(20, 1));
  Rng rng(1);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_query(tables[i++ % tables.size()], rng));
}
BENCHMARK(BM_SampleQuery);

BENCHMARK_MAIN();
