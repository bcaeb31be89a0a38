#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "nl2sql/error.hpp"
#include "nl2sql/sql.hpp"
#include "nl2sql/tokenize.hpp"
#include "support/fixtures.hpp"

using namespace nl2sql;

namespace {

// COUNT Engine WHERE Driver = 'val musetti'
Query count_engine_query() {
  return Query{AggOp::Count, 3, {Condition{5, CondOp::Eq, Value::text("val musetti")}}};
}

}  // namespace

TEST(Execute, CountEngineForDriver) {
  const Table t = fx::racing_table();
  const auto r = execute(count_engine_query(), t);
  ASSERT_FALSE(r.is_rows());
  // Three rows name the driver, one with different case and spacing.
  EXPECT_EQ(r.scalar_value(), Value::number(3));
}

TEST(Execute, UnsatisfiableFilterCountsZero) {
  const Table t = fx::racing_table();
  Query q{AggOp::Count, 0, {Condition{5, CondOp::Eq, Value::text("nobody")}}};
  EXPECT_EQ(execute(q, t), ExecResult::scalar(Value::number(0)));
}

TEST(Execute, NoAggregationReturnsMultiset) {
  const Table t = fx::racing_table();
  Query q{AggOp::None, 1, {Condition{5, CondOp::Eq, Value::text("VAL MUSETTI")}}};
  const auto r = execute(q, t);
  ASSERT_TRUE(r.is_rows());
  EXPECT_EQ(r.row_values().size(), 3u);
  EXPECT_EQ(r, ExecResult::rows({Value::text("Cooper"), Value::text("Maserati"), Value::text("Maserati")}));
}

TEST(Execute, EmptyRowsIsValidButEmptyMinIsError) {
  const Table t = fx::racing_table();
  Query rows{AggOp::None, 4, {Condition{4, CondOp::Gt, Value::number(100)}}};
  EXPECT_TRUE(execute(rows, t).row_values().empty());
  Query min{AggOp::Min, 4, {Condition{4, CondOp::Gt, Value::number(100)}}};
  EXPECT_THROW(execute(min, t), EmptyAggregate);
}

TEST(Execute, MinMaxAndComparisons) {
  const Table t = fx::racing_table();
  EXPECT_EQ(execute(Query{AggOp::Min, 4, {}}, t).scalar_value(), Value::number(8));
  EXPECT_EQ(execute(Query{AggOp::Max, 4, {Condition{4, CondOp::Lt, Value::number(31)}}}, t).scalar_value(),
            Value::number(30));
}

TEST(Execute, TypeIncompatibleQueriesAreInvalid) {
  const Table t = fx::racing_table();
  EXPECT_THROW(execute(Query{AggOp::Max, 0, {}}, t), InvalidQuery);
  EXPECT_THROW(execute(Query{AggOp::None, 0, {Condition{0, CondOp::Gt, Value::text("a")}}}, t), InvalidQuery);
  EXPECT_THROW(execute(Query{AggOp::None, 0, {Condition{4, CondOp::Eq, Value::text("30")}}}, t), InvalidQuery);
  EXPECT_THROW(execute(Query{AggOp::None, 9, {}}, t), InvalidQuery);
  const Condition c{5, CondOp::Eq, Value::text("x")};
  EXPECT_THROW(execute(Query{AggOp::None, 0, {c, c}}, t), InvalidQuery);
}

TEST(Execute, MatchesBruteForceOracleOnRandomPairs) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const Table t = fx::random_table(rng, "r");
    const Query q = fx::random_query(t, rng);
    const auto expected = fx::oracle_execute(q, t);
    fx::OracleResult got;
    try {
      got = fx::as_oracle(execute(q, t));
    } catch (const EmptyAggregate&) {
      got.error = true;
      got.scalar = true;
    }
    EXPECT_TRUE(fx::same_result(got, expected)) << "trial " << trial << ": " << serialize_query(q, t.header);
  }
}

TEST(Execute, ConjunctionIsCommutative) {
  Rng rng(99);
  int checked = 0;
  while (checked < 500) {
    const Table t = fx::random_table(rng, "r");
    Query q = fx::random_query(t, rng);
    if (q.conditions.size() < 2) continue;
    Query p = q;
    rng.shuffle(p.conditions.begin(), p.conditions.end());
    EXPECT_EQ(matching_rows(q, t), matching_rows(p, t));
    ++checked;
  }
}

TEST(Execute, AddingConditionNeverEnlargesRows) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const Table t = fx::random_table(rng, "r");
    Query q = fx::random_query(t, rng);
    if (q.conditions.empty()) continue;
    Query fewer = q;
    fewer.conditions.pop_back();
    const auto a = matching_rows(q, t);
    const auto b = matching_rows(fewer, t);
    EXPECT_LE(a.size(), b.size());
    for (auto i : a) EXPECT_NE(std::find(b.begin(), b.end(), i), b.end());
  }
}

TEST(Serialize, SimpleAndConditioned) {
  const Table t = fx::racing_table();
  EXPECT_EQ(serialize_query(Query{AggOp::None, 0, {}}, t.header), "SELECT Entrant FROM table");
  EXPECT_EQ(serialize_query(count_engine_query(), t.header),
            "SELECT COUNT Engine FROM table WHERE Driver = 'val musetti'");
  Query q{AggOp::Max, 4, {Condition{4, CondOp::Lt, Value::number(30.5)}, Condition{0, CondOp::Eq, Value::text("O'Neil")}}};
  EXPECT_EQ(serialize_query(q, t.header), "SELECT MAX No FROM table WHERE No < 30.5 AND Entrant = 'o''neil'");
}

TEST(Parse, CanonicalFormRecoversQuery) {
  const Table t = fx::racing_table();
  EXPECT_EQ(parse_query("SELECT COUNT Engine FROM table WHERE Driver = 'val musetti'", t.header),
            count_engine_query());
}

TEST(Parse, Errors) {
  const Table t = fx::racing_table();
  EXPECT_THROW(parse_query("SELECT nosuchcol FROM table", t.header), UnknownColumn);
  EXPECT_THROW(parse_query("SELECT MIN Driver FROM table", t.header), TypeMismatch);
  try {
    parse_query("SELECT Driver FORM table", t.header);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 0u);
  }
}

TEST(Parse, LongestColumnMatch) {
  const Table t = make_table("p", {"Team", "Team Name", "Score"}, {{"a", "b", "1"}});
  const Query q = parse_query("SELECT Team Name FROM table WHERE Team = 'a'", t.header);
  EXPECT_EQ(q.select, 1u);
  ASSERT_EQ(q.conditions.size(), 1u);
  EXPECT_EQ(q.conditions[0].column, 0u);
}

TEST(Parse, RoundTripsRandomQueries) {
  Rng rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const Table t = fx::random_table(rng, "r");
    Query q = fx::random_query(t, rng);
    // The canonical form stores text normalized, so compare against that.
    for (auto& c : q.conditions) {
      if (c.value.is_text()) c.value = Value::text(c.value.normalized());
    }
    const std::string s = serialize_query(q, t.header);
    EXPECT_EQ(parse_query(s, t.header), q) << s;
    EXPECT_EQ(serialize_query(parse_query(s, t.header), t.header), s);
  }
}

TEST(WhereTokens, DriverCondition) {
  const Table t = fx::racing_table();
  const std::vector<std::string> toks = {"WHERE", "driver", "=", "val", "musetti", "END"};
  EXPECT_EQ(where_tokens(count_engine_query(), t.header), toks);
  const auto conds = where_from_tokens(toks, t.header);
  ASSERT_EQ(conds.size(), 1u);
  EXPECT_EQ(conds[0], (Condition{5, CondOp::Eq, Value::text("val musetti")}));
}

TEST(WhereTokens, StructureErrors) {
  const Table t = fx::racing_table();
  const auto bad = [&](std::vector<std::string> toks) { EXPECT_THROW(where_from_tokens(toks, t.header), StructureError); };
  bad({"WHERE", "=", "END"});
  bad({"WHERE", "driver", "=", "END"});
  bad({"WHERE", "driver", "=", "x"});
  bad({"driver", "=", "x", "END"});
  bad({"WHERE", "driver", ">", "x", "END"});
  bad({"WHERE", "no", "=", "abc", "END"});
  bad({});
  EXPECT_TRUE(where_from_tokens(std::vector<std::string>{"END"}, t.header).empty());
}

TEST(WhereTokens, RoundTripRandomQueries) {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const Table t = fx::random_table(rng, "r");
    Query q = fx::random_query(t, rng);
    for (auto& c : q.conditions) {
      if (c.value.is_text()) c.value = Value::text(c.value.normalized());
    }
    // Rebuild the stream from the serialized clause text rather than where_tokens.
    std::vector<std::string> toks;
    if (q.conditions.empty()) {
      toks = {"END"};
    } else {
      const std::string s = serialize_query(q, t.header);
      std::string clause = s.substr(s.find(" WHERE ") + 1);
      std::string cleaned;
      for (char ch : clause) {
        if (ch != '\'') cleaned.push_back(ch);
      }
      for (auto& tok : tokenize(cleaned)) {
        if (tok == "where" || tok == "and") {
          for (auto& ch : tok) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        }
        toks.push_back(tok);
      }
      toks.push_back("END");
    }
    EXPECT_EQ(where_from_tokens(toks, t.header), q.conditions) << serialize_query(q, t.header);
  }
}

TEST(QueryTokens, FullStreamRoundTrip) {
  const Table t = fx::racing_table();
  const Query q{AggOp::Max, 4, {Condition{5, CondOp::Eq, Value::text("val musetti")}, Condition{4, CondOp::Gt, Value::number(10)}}};
  const auto toks = query_tokens(q, t.header);
  EXPECT_EQ(toks.front(), "SELECT");
  EXPECT_EQ(query_from_tokens(toks, t.header), q);
}

TEST(LfEqual, IdentityAndSwappedConditions) {
  const Table t = fx::racing_table();
  const Condition a{5, CondOp::Eq, Value::text("val musetti")};
  const Condition b{1, CondOp::Eq, Value::text("maserati")};
  const Query q{AggOp::Count, 3, {a, b}};
  const Query swapped{AggOp::Count, 3, {b, a}};
  EXPECT_TRUE(lf_equal(q, q, t.header));
  EXPECT_FALSE(lf_equal(q, swapped, t.header));
  EXPECT_EQ(execute(q, t), execute(swapped, t));
}

TEST(LfEqual, AgreesWithSerializationAndImpliesSameExecution) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Table t = fx::random_table(rng, "r");
    const Query a = fx::random_query(t, rng);
    const Query b = rng.bernoulli(0.3) ? a : fx::random_query(t, rng);
    const bool eq = serialize_query(a, t.header) == serialize_query(b, t.header);
    EXPECT_EQ(lf_equal(a, b, t.header), eq);
    if (eq) EXPECT_TRUE(fx::same_result(fx::oracle_execute(a, t), fx::oracle_execute(b, t)));
  }
}

TEST(QueryJson, RoundTripAndWireCodes) {
  const Query q{AggOp::Min, 4, {Condition{4, CondOp::Lt, Value::number(31)}, Condition{5, CondOp::Eq, Value::text("x")}}};
  const auto j = query_to_json(q);
  EXPECT_EQ(j["agg"], 2);
  EXPECT_EQ(j["conds"][0][1], 2);
  EXPECT_EQ(query_from_json(j), q);
}
