#include <gtest/gtest.h>

#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "nl2sql/datagen.hpp"
#include "nl2sql/error.hpp"
#include "nl2sql/tokenize.hpp"
#include "support/fixtures.hpp"

using namespace nl2sql;
using nl2sql::fx::TempDir;

namespace {

std::vector<std::vector<std::string>> grid(std::size_t rows, std::size_t cols) {
  std::vector<std::vector<std::string>> out(rows, std::vector<std::string>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r][c] = "v" + std::to_string(r) + "_" + std::to_string(c);
  }
  return out;
}

std::vector<std::string> names(std::size_t cols) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < cols; ++c) out.push_back("col" + std::to_string(c));
  return out;
}

// Plain DP table, written independently of the library version.
std::size_t reference_levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[a.size()][b.size()];
}

bool executes_same(const Query& a, const Query& b, const Table& t) {
  return fx::same_result(fx::oracle_execute(a, t), fx::oracle_execute(b, t));
}

std::vector<Table> usable_tables(std::size_t n, std::uint64_t seed) {
  return filter_tables(synthesize_tables(n, seed));
}

}  // namespace

TEST(FilterTables, RejectsTooFewRows) {
  const Table t = make_table("small", names(6), grid(4, 6));
  EXPECT_TRUE(filter_tables(std::vector<Table>{t}).empty());
}

TEST(FilterTables, RejectsRowWithMostlyIdenticalCells) {
  auto rows = grid(6, 6);
  for (std::size_t c = 0; c < 5; ++c) rows[2][c] = "same";
  const Table t = make_table("dup", names(6), rows);
  EXPECT_TRUE(filter_tables(std::vector<Table>{t}).empty());
}

TEST(FilterTables, RejectsLongCellsAndNarrowTables) {
  auto rows = grid(6, 6);
  rows[1][1] = std::string(51, 'x');
  EXPECT_TRUE(filter_tables(std::vector<Table>{make_table("long", names(6), rows)}).empty());
  EXPECT_TRUE(filter_tables(std::vector<Table>{make_table("narrow", names(4), grid(6, 4))}).empty());
}

TEST(FilterTables, SurvivorLosesLastRow) {
  const Table t = make_table("ok", names(5), grid(6, 5));
  const auto out = filter_tables(std::vector<Table>{t});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].num_rows(), 5u);
  EXPECT_EQ(out[0].rows.back(), t.rows[4]);
}

TEST(SampleQuery, TextOnlyTableUsesNoneOrCount) {
  const Table t = make_table("text", names(5), grid(6, 5));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Query q = sample_query(t, rng);
    EXPECT_TRUE(q.agg == AggOp::None || q.agg == AggOp::Count);
    for (const auto& c : q.conditions) EXPECT_EQ(c.op, CondOp::Eq);
  }
}

TEST(SampleQuery, ThousandSamplesAllNonEmpty) {
  const auto tables = usable_tables(20, 5);
  ASSERT_FALSE(tables.empty());
  Rng rng(2);
  std::set<AggOp> aggs;
  std::set<CondOp> ops;
  for (int i = 0; i < 1000; ++i) {
    const Table& t = tables[static_cast<std::size_t>(i) % tables.size()];
    const Query q = sample_query(t, rng);
    aggs.insert(q.agg);
    for (const auto& c : q.conditions) {
      ops.insert(c.op);
      if (c.op != CondOp::Eq) {
        EXPECT_EQ(t.header[c.column].type, ColumnType::Real);
      }
    }
    if (q.agg == AggOp::Min || q.agg == AggOp::Max) {
      EXPECT_EQ(t.header[q.select].type, ColumnType::Real);
    }
    EXPECT_FALSE(matching_rows(q, t).empty()) << serialize_query(q, t.header);
  }
  EXPECT_EQ(aggs.size(), 4u);
  EXPECT_EQ(ops.size(), 3u);
}

TEST(SampleQuery, ZeroConditionsAlwaysNonEmpty) {
  const auto tables = usable_tables(5, 9);
  Rng rng(4);
  for (const auto& t : tables) {
    const Query q = sample_query(t, rng, SampleOptions{100, 0});
    EXPECT_TRUE(q.conditions.empty());
    EXPECT_EQ(matching_rows(q, t).size(), t.num_rows());
  }
}

TEST(SampleQuery, ExhaustsOnDegenerateTable) {
  Table t;
  t.id = "empty";
  t.header = {{"a", ColumnType::Text}};
  Rng rng(0);
  EXPECT_THROW(sample_query(t, rng, SampleOptions{5, 1}), SamplingExhausted);
}

TEST(MinimizeConditions, DropsRedundantCondition) {
  const Table t = fx::racing_table();
  // Every Val Musetti row in the two Arciero entries also has Constructor Maserati.
  const Query q{AggOp::Count, 3,
                {Condition{0, CondOp::Eq, Value::text("arciero brothers")}, Condition{1, CondOp::Eq, Value::text("maserati")}}};
  const Query m = minimize_conditions(q, t);
  ASSERT_EQ(m.conditions.size(), 1u);
  EXPECT_EQ(m.conditions[0].column, 0u);
}

TEST(MinimizeConditions, ZeroConditionsUnchanged) {
  const Table t = fx::racing_table();
  const Query q{AggOp::None, 2, {}};
  EXPECT_EQ(minimize_conditions(q, t), q);
}

TEST(MinimizeConditions, ResultIsEquivalentAndOneMinimal) {
  const auto tables = usable_tables(30, 21);
  Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    const Table& t = tables[static_cast<std::size_t>(i) % tables.size()];
    const Query q = sample_query(t, rng, SampleOptions{100, 2});
    const Query m = minimize_conditions(q, t);
    EXPECT_TRUE(executes_same(q, m, t));
    for (std::size_t k = 0; k < m.conditions.size(); ++k) {
      Query dropped = m;
      dropped.conditions.erase(dropped.conditions.begin() + static_cast<std::ptrdiff_t>(k));
      EXPECT_FALSE(executes_same(m, dropped, t)) << serialize_query(m, t.header);
    }
  }
}

TEST(RenderTemplate, CountWithCondition) {
  const Table t = fx::racing_table();
  const Query q{AggOp::Count, 3, {Condition{5, CondOp::Eq, Value::text("Val Musetti")}}};
  EXPECT_EQ(render_template_question(q, t, 0), "how many engine are there when driver is val musetti");
}

TEST(RenderTemplate, MinimalTemplate) {
  const Table t = fx::racing_table();
  EXPECT_EQ(render_template_question(Query{AggOp::None, 3, {}}, t, 0), "what is the engine");
}

TEST(RenderTemplate, ValuesAppearVerbatim) {
  const auto tables = usable_tables(30, 33);
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Table& t = tables[static_cast<std::size_t>(i) % tables.size()];
    const Query q = sample_query(t, rng);
    const std::string s = render_template_question(q, t, rng);
    for (const auto& c : q.conditions) EXPECT_NE(s.find(c.value.normalized()), std::string::npos) << s;
  }
}

TEST(EditDistance, KnownCasesAndOracle) {
  EXPECT_EQ(char_edit_distance("abc", "abc"), 0u);
  EXPECT_EQ(char_edit_distance("kitten", "sitting"), 3u);
  EXPECT_EQ(char_edit_distance("", "abc"), 3u);
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    std::string a, b;
    for (std::size_t k = rng.index(12); k > 0; --k) a.push_back(static_cast<char>('a' + rng.index(4)));
    for (std::size_t k = rng.index(12); k > 0; --k) b.push_back(static_cast<char>('a' + rng.index(4)));
    EXPECT_EQ(char_edit_distance(a, b), char_edit_distance(b, a));
    EXPECT_EQ(char_edit_distance(a, b), reference_levenshtein(a, b));
  }
}

TEST(EditDistance, ParaphraseFilter) {
  EXPECT_FALSE(keep_paraphrase("how many engine are there", "how many engines are there"));
  EXPECT_TRUE(keep_paraphrase("how many engine are there", "which engines did he use in total"));
}

TEST(BuildDataset, TenTablesSplitSevenOneTwo) {
  auto tables = usable_tables(40, 1);
  ASSERT_GE(tables.size(), 10u);
  tables.resize(10);
  const Dataset d = build_dataset(tables, 6, {}, 3);
  std::set<std::string> train, dev, test;
  for (const auto& e : d.train) train.insert(e.table_id);
  for (const auto& e : d.dev) dev.insert(e.table_id);
  for (const auto& e : d.test) test.insert(e.table_id);
  EXPECT_EQ(train.size(), 7u);
  EXPECT_EQ(dev.size(), 1u);
  EXPECT_EQ(test.size(), 2u);
  EXPECT_EQ(d.num_examples(), 60u);
}

TEST(BuildDataset, InvariantsHoldOnEveryExample) {
  const Dataset d = build_dataset(usable_tables(60, 17), 6, {}, 17);
  std::map<std::string, Split> owner;
  for (Split s : {Split::Train, Split::Dev, Split::Test}) {
    for (const auto& e : d.split(s)) {
      auto [it, inserted] = owner.emplace(e.table_id, s);
      EXPECT_TRUE(inserted || it->second == s) << e.table_id;
      const Table& t = d.table(e.table_id);
      EXPECT_FALSE(matching_rows(e.gold, t).empty());
      EXPECT_NO_THROW(execute(e.gold, t));
      for (std::size_t k = 0; k < e.gold.conditions.size(); ++k) {
        Query dropped = e.gold;
        dropped.conditions.erase(dropped.conditions.begin() + static_cast<std::ptrdiff_t>(k));
        EXPECT_FALSE(executes_same(e.gold, dropped, t));
      }
      for (const auto& c : e.gold.conditions) {
        EXPECT_NE(normalize_text(e.question_raw).find(c.value.normalized()), std::string::npos);
      }
    }
  }
}

TEST(BuildDataset, SameSeedGivesIdenticalFiles) {
  TempDir a("ds"), b("ds");
  save_dataset(a.path(), build_dataset(usable_tables(20, 4), 6, {}, 8));
  save_dataset(b.path(), build_dataset(usable_tables(20, 4), 6, {}, 8));
  for (Split s : {Split::Train, Split::Dev, Split::Test}) {
    EXPECT_EQ(fx::read_file(split_path(a.path(), s)), fx::read_file(split_path(b.path(), s)));
  }
  EXPECT_EQ(fx::read_file(tables_path(a.path())), fx::read_file(tables_path(b.path())));
}

TEST(BuildDataset, SaveLoadRoundTrip) {
  TempDir dir("ds");
  const Dataset d = build_dataset(usable_tables(12, 2), 6, {}, 2);
  save_dataset(dir.path(), d);
  const Dataset back = load_dataset(dir.path());
  EXPECT_EQ(back.tables, d.tables);
  ASSERT_EQ(back.train.size(), d.train.size());
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    EXPECT_EQ(back.train[i].gold, d.train[i].gold);
    EXPECT_EQ(back.train[i].question, d.train[i].question);
  }
}

TEST(BuildDataset, RejectsBadRatio) {
  EXPECT_THROW(build_dataset(usable_tables(5, 2), 6, SplitRatio{-1, 1, 1}, 0), ConfigError);
}

TEST(DatasetStats, EmptyDatasetIsAllZero) {
  const auto s = dataset_stats(Dataset{});
  EXPECT_EQ(s["num_examples"], 0);
  EXPECT_TRUE(s["question_tokens"].empty());
  EXPECT_TRUE(s["columns_per_table"].empty());
}

TEST(DatasetStats, SingleExampleGivesSingletonBins) {
  Dataset d;
  d.tables.push_back(fx::racing_table());
  Example e;
  e.table_id = "racing";
  e.question_raw = "how many engine are there";
  e.question = tokenize(e.question_raw);
  e.gold = Query{AggOp::Count, 3, {}};
  d.train.push_back(e);
  const auto s = dataset_stats(d);
  ASSERT_EQ(s["question_tokens"].size(), 1u);
  EXPECT_EQ(s["question_tokens"][0]["value"], 5);
  EXPECT_EQ(s["question_tokens"][0]["count"], 1);
  EXPECT_EQ(s["columns_per_table"][0]["value"], 6);
}

TEST(DatasetStats, HistogramMassEqualsExampleCount) {
  const Dataset d = build_dataset(usable_tables(30, 6), 6, {}, 6);
  const auto s = dataset_stats(d);
  for (const char* key : {"columns_per_table", "question_tokens", "query_tokens"}) {
    long long total = 0;
    for (const auto& bin : s[key]) total += bin["count"].get<long long>();
    EXPECT_EQ(total, static_cast<long long>(d.num_examples())) << key;
  }
  long long prefixes = 0;
  for (const auto& [prefix, count] : s["question_prefixes"].items()) prefixes += count.get<long long>();
  EXPECT_EQ(prefixes, static_cast<long long>(d.num_examples()));
}
