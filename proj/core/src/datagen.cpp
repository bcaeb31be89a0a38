#include "nl2sql/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "nl2sql/error.hpp"
#include "nl2sql/tokenize.hpp"

namespace nl2sql {

using nlohmann::json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

const Table& Dataset::table(std::string_view id) const {
  auto it = std::lower_bound(tables.begin(), tables.end(), id,
                             [](const Table& t, std::string_view key) { return t.id < key; });
  if (it == tables.end() || it->id != id) {
    // Tables loaded from user files need not be sorted.
    for (const auto& t : tables) {
      if (t.id == id) return t;
    }
    throw UnknownTable("unknown table '" + std::string(id) + "'");
  }
  return *it;
}

const std::vector<Example>& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Dev: return dev;
    case Split::Test: return test;
  }
  return train;
}

std::vector<Example>& Dataset::split(Split s) {
  return const_cast<std::vector<Example>&>(std::as_const(*this).split(s));
}

// --- filtering -------------------------------------------------------------------

namespace {

bool row_too_uniform(const std::vector<Value>& row) {
  std::map<std::string, std::size_t> counts;
  std::size_t most = 0;
  for (const auto& v : row) most = std::max(most, ++counts[v.normalized()]);
  return static_cast<double>(most) > kMaxIdenticalFraction * static_cast<double>(row.size());
}

bool keep_table(const Table& t) {
  if (t.num_rows() < kMinRows || t.num_columns() < kMinColumns) return false;
  for (const auto& c : t.header) {
    if (normalize_text(c.name).empty()) return false;
  }
  for (const auto& row : t.rows) {
    for (const auto& v : row) {
      if (v.display().size() > kMaxCellChars) return false;
    }
    if (row_too_uniform(row)) return false;
  }
  return true;
}

}  // namespace

std::vector<Table> filter_tables(std::span<const Table> tables) {
  std::vector<Table> out;
  for (const auto& t : tables) {
    if (!keep_table(t)) continue;
    Table kept = t;
    kept.rows.pop_back();
    out.push_back(std::move(kept));
  }
  return out;
}

// --- sampling --------------------------------------------------------------------

namespace {

std::size_t decimals_of(double x) {
  const std::string s = format_number(x);
  const auto dot = s.find('.');
  return dot == std::string::npos ? 0 : s.size() - dot - 1;
}

Value sample_condition_value(const Table& t, std::size_t col, CondOp op, Rng& rng) {
  if (op == CondOp::Eq) {
    const Value& cell = t.rows[rng.index(t.num_rows())][col];
    return cell.is_text() ? Value::text(cell.normalized()) : cell;
  }
  double lo = t.rows[0][col].as_number(), hi = lo;
  std::size_t precision = 0;
  for (const auto& row : t.rows) {
    const double x = row[col].as_number();
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    precision = std::max(precision, decimals_of(x));
  }
  const double scale = std::pow(10.0, static_cast<double>(precision));
  double x = std::round(rng.uniform(lo, hi) * scale) / scale;
  x = std::clamp(x, lo, hi);
  if (x == 0.0) x = 0.0;  // no negative zero
  return Value::number(x);
}

}  // namespace

Query sample_query(const Table& t, Rng& rng, const SampleOptions& options) {
  if (t.num_columns() == 0) throw SamplingExhausted("table '" + t.id + "' has no columns");
  for (std::size_t attempt = 0; attempt < options.retry_budget; ++attempt) {
    if (t.num_rows() == 0) break;
    Query q;
    q.select = rng.index(t.num_columns());
    std::vector<AggOp> aggs = {AggOp::None, AggOp::Count};
    if (t.header[q.select].type == ColumnType::Real) {
      aggs.push_back(AggOp::Min);
      aggs.push_back(AggOp::Max);
    }
    q.agg = aggs[rng.index(aggs.size())];
    const std::size_t n = options.num_conditions ? *options.num_conditions : rng.index(3);
    bool duplicate = false;
    for (std::size_t k = 0; k < n; ++k) {
      Condition c;
      c.column = rng.index(t.num_columns());
      if (t.header[c.column].type == ColumnType::Real) {
        static constexpr CondOp kOps[] = {CondOp::Eq, CondOp::Gt, CondOp::Lt};
        c.op = kOps[rng.index(3)];
      }
      c.value = sample_condition_value(t, c.column, c.op, rng);
      if (std::find(q.conditions.begin(), q.conditions.end(), c) != q.conditions.end()) duplicate = true;
      q.conditions.push_back(std::move(c));
    }
    if (duplicate) continue;
    if (!matching_rows(q, t).empty()) return q;
  }
  throw SamplingExhausted("no non-empty query for table '" + t.id + "' after " +
                          std::to_string(options.retry_budget) + " draws");
}

Query minimize_conditions(const Query& q, const Table& t) {
  Query cur = q;
  const ExecResult target = execute(q, t);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < cur.conditions.size();) {
      Query trial = cur;
      trial.conditions.erase(trial.conditions.begin() + static_cast<std::ptrdiff_t>(i));
      if (execute(trial, t) == target) {
        cur = std::move(trial);
        changed = true;
      } else {
        ++i;
      }
    }
  }
  return cur;
}

// --- templates -------------------------------------------------------------------

std::string render_template_question(const Query& q, const Table& t, std::size_t variant) {
  static constexpr std::string_view kPrefix[4][kTemplateVariants] = {
      {"what is the ", "name the "},
      {"how many ", "how many "},
      {"what is the smallest ", "what is the lowest "},
      {"what is the largest ", "what is the highest "},
  };
  static constexpr std::string_view kSuffix[4][kTemplateVariants] = {
      {"", ""}, {" are there", " are listed"}, {"", ""}, {"", ""}};
  check_query(q, t.header);
  variant %= kTemplateVariants;
  const auto a = static_cast<std::size_t>(q.agg);
  std::string out(kPrefix[a][variant]);
  out += t.header[q.select].name;
  out += kSuffix[a][variant];
  for (std::size_t i = 0; i < q.conditions.size(); ++i) {
    const Condition& c = q.conditions[i];
    out += i == 0 ? (variant == 0 ? " when " : " where ") : " and ";
    out += t.header[c.column].name;
    switch (c.op) {
      case CondOp::Eq: out += " is "; break;
      case CondOp::Gt: out += " is greater than "; break;
      case CondOp::Lt: out += " is less than "; break;
    }
    out += c.value.normalized();
  }
  return normalize_text(out);
}

std::string render_template_question(const Query& q, const Table& t, Rng& rng) {
  return render_template_question(q, t, rng.index(kTemplateVariants));
}

std::size_t char_edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

bool keep_paraphrase(std::string_view generated, std::string_view paraphrase) {
  return char_edit_distance(generated, paraphrase) > kMinParaphraseDistance;
}

// --- assembly --------------------------------------------------------------------

Dataset build_dataset(std::vector<Table> tables, std::size_t per_table, SplitRatio ratio,
                      std::uint64_t seed) {
  std::sort(tables.begin(), tables.end(), [](const Table& a, const Table& b) { return a.id < b.id; });
  Dataset d;
  d.seed = seed;
  std::vector<std::vector<Example>> per_table_examples;
  for (auto& t : tables) {
    Rng rng(derive_seed(seed, "table:" + t.id));
    std::vector<Example> examples;
    try {
      for (std::size_t k = 0; k < per_table; ++k) {
        Query q = minimize_conditions(sample_query(t, rng), t);
        Example e;
        e.table_id = t.id;
        e.question_raw = render_template_question(q, t, rng);
        e.question = tokenize(e.question_raw);
        e.gold = std::move(q);
        examples.push_back(std::move(e));
      }
    } catch (const SamplingExhausted& err) {
      std::cerr << "warning: skipping table " << t.id << ": " << err.what() << '\n';
      d.skipped_tables.push_back(t.id);
      continue;
    }
    d.tables.push_back(std::move(t));
    per_table_examples.push_back(std::move(examples));
  }

  const std::size_t n = d.tables.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng(derive_seed(seed, "split"));
  split_rng.shuffle(order.begin(), order.end());

  const double total = ratio.train + ratio.dev + ratio.test;
  if (!(total > 0.0) || ratio.train < 0 || ratio.dev < 0 || ratio.test < 0) {
    throw ConfigError("split ratio must be non-negative with a positive sum");
  }
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(n * ratio.train / total)));
  const auto n_dev = std::min(n - n_train, static_cast<std::size_t>(std::llround(n * ratio.dev / total)));
  std::vector<Split> assignment(n);
  for (std::size_t k = 0; k < n; ++k) {
    assignment[order[k]] = k < n_train ? Split::Train : k < n_train + n_dev ? Split::Dev : Split::Test;
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = d.split(assignment[i]);
    for (auto& e : per_table_examples[i]) dst.push_back(std::move(e));
  }
  return d;
}

json dataset_stats(const Dataset& d) {
  std::map<std::size_t, std::size_t> columns, question_len, query_len;
  std::map<std::string, std::size_t> prefixes;
  std::size_t total = 0;
  for (Split s : {Split::Train, Split::Dev, Split::Test}) {
    for (const auto& e : d.split(s)) {
      const Table& t = d.table(e.table_id);
      ++columns[t.num_columns()];
      ++question_len[e.question.size()];
      ++query_len[query_tokens(e.gold, t.header).size()];
      std::string prefix = e.question.empty() ? "" : e.question.front();
      if (e.question.size() > 1 && (prefix == "what" || prefix == "how")) prefix += " " + e.question[1];
      ++prefixes[prefix];
      ++total;
    }
  }
  auto hist = [](const std::map<std::size_t, std::size_t>& m) {
    json bins = json::array();
    for (const auto& [k, v] : m) bins.push_back({{"value", k}, {"count", v}});
    return bins;
  };
  json j;
  j["num_examples"] = total;
  j["num_tables"] = d.tables.size();
  j["splits"] = {{"train", d.train.size()}, {"dev", d.dev.size()}, {"test", d.test.size()}};
  j["columns_per_table"] = hist(columns);
  j["question_tokens"] = hist(question_len);
  j["query_tokens"] = hist(query_len);
  j["question_prefixes"] = json::object();
  for (const auto& [k, v] : prefixes) j["question_prefixes"][k] = v;
  return j;
}

// --- synthetic tables ------------------------------------------------------------

namespace {

struct ColumnSpec {
  std::string_view name;
  bool real;
  double lo = 0, hi = 0;
  int decimals = 0;
  bool person = false;  // two-word values
};

constexpr ColumnSpec kColumnPool[] = {
    {"player", false, 0, 0, 0, true},  {"team", false},
    {"position", false},               {"nationality", false},
    {"college", false},                {"pick", true, 1, 300},
    {"round", true, 1, 12},            {"year", true, 1950, 2016},
    {"score", true, 0, 150},           {"points", true, 0, 400},
    {"driver", false, 0, 0, 0, true},  {"engine", false},
    {"chassis", false},                {"constructor", false},
    {"entrant", false},                {"city", false},
    {"country", false},                {"venue", false},
    {"attendance", true, 1000, 90000}, {"opponent", false},
    {"result", false},                 {"goals", true, 0, 60},
    {"assists", true, 0, 80},          {"games played", true, 1, 82},
    {"height", true, 1.6, 2.2, 2},     {"weight", true, 60, 130, 1},
    {"district", false},               {"incumbent", false, 0, 0, 0, true},
    {"party", false},                  {"first elected", true, 1900, 2014},
    {"population", true, 500, 900000}, {"area", true, 1, 5000, 1},
    {"rank", true, 1, 50},             {"title", false},
    {"director", false, 0, 0, 0, true}, {"season", true, 1, 30},
    {"episode", true, 1, 200},         {"station", false},
    {"frequency", true, 88, 108, 1},   {"language", false},
    {"winner", false, 0, 0, 0, true},  {"runner up", false, 0, 0, 0, true},
    {"laps", true, 1, 200},            {"grid", true, 1, 33},
    {"school", false},                 {"location", false},
    {"founded", true, 1800, 2010},     {"enrollment", true, 100, 40000},
    {"capacity", true, 1000, 100000},  {"votes", true, 100, 500000},
    {"gold", true, 0, 40},             {"silver", true, 0, 40},
    {"bronze", true, 0, 40},           {"time", true, 50, 200, 2},
};

constexpr std::string_view kSyllables[] = {
    "ka", "lo", "mi", "ren", "dor", "vel", "sa", "tor", "bel", "ni", "ro", "den", "ma", "ti",
    "gar", "lin", "po", "ser", "an", "ko", "ve", "ra", "mon", "tel", "fi", "da", "zu", "har"};

std::string random_word(Rng& rng) {
  std::string w;
  const std::size_t n = 2 + rng.index(2);
  for (std::size_t i = 0; i < n; ++i) w += kSyllables[rng.index(std::size(kSyllables))];
  return w;
}

std::string random_text(const ColumnSpec& spec, Rng& rng) {
  std::string s = random_word(rng);
  if (spec.person || rng.bernoulli(0.2)) s += " " + random_word(rng);
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string random_number(const ColumnSpec& spec, Rng& rng) {
  const double scale = std::pow(10.0, spec.decimals);
  return format_number(std::round(rng.uniform(spec.lo, spec.hi) * scale) / scale);
}

}  // namespace

std::vector<Table> synthesize_tables(std::size_t count, std::uint64_t seed) {
  std::vector<Table> out;
  out.reserve(count);
  const std::size_t width = std::to_string(count).size();
  for (std::size_t k = 0; k < count; ++k) {
    std::string id = std::to_string(k);
    id = "t" + std::string(width - std::min(width, id.size()), '0') + id;
    Rng rng(derive_seed(seed, "synth:" + id));
    const std::size_t ncols = 5 + rng.index(4);
    const std::size_t nrows = 6 + rng.index(7);
    std::vector<std::size_t> pool(std::size(kColumnPool));
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    rng.shuffle(pool.begin(), pool.end());
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows(nrows);
    for (std::size_t c = 0; c < ncols; ++c) {
      const ColumnSpec& spec = kColumnPool[pool[c]];
      header.emplace_back(spec.name);
      // Text columns draw from a small per-column pool so values repeat.
      std::vector<std::string> values;
      const std::size_t distinct = spec.real ? 0 : 2 + rng.index(nrows - 1);
      for (std::size_t i = 0; i < distinct; ++i) values.push_back(random_text(spec, rng));
      for (auto& row : rows) {
        row.push_back(spec.real ? random_number(spec, rng) : values[rng.index(values.size())]);
      }
    }
    header[0][0] = static_cast<char>(header[0][0] - 'a' + 'A');
    out.push_back(make_table(std::move(id), header, rows));
  }
  return out;
}

// --- files -----------------------------------------------------------------------

json example_to_json(const Example& e) {
  return {{"table_id", e.table_id}, {"question", e.question_raw}, {"sql", query_to_json(e.gold)}};
}

Example example_from_json(const json& j) {
  Example e;
  try {
    e.table_id = j.at("table_id").get<std::string>();
    e.question_raw = j.at("question").get<std::string>();
  } catch (const json::exception& err) {
    throw FormatError(std::string("bad example: ") + err.what());
  }
  e.question = tokenize(e.question_raw);
  e.gold = query_from_json(j.at("sql"));
  return e;
}

std::filesystem::path tables_path(const std::filesystem::path& dir) { return dir / "tables.jsonl"; }

std::filesystem::path split_path(const std::filesystem::path& dir, Split s) {
  return dir / ("examples." + std::string(to_string(s)) + ".jsonl");
}

void save_examples(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& e : examples) out << example_to_json(e).dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<Example> load_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(example_from_json(json::parse(line)));
    } catch (const json::exception& err) {
      throw FormatError(path.string() + ": " + err.what(), line_no);
    } catch (const FormatError& err) {
      throw FormatError(path.string() + ": " + err.what(), line_no);
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  save_tables(tables_path(dir), d.tables);
  for (Split s : {Split::Train, Split::Dev, Split::Test}) save_examples(split_path(dir, s), d.split(s));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.tables = load_tables(tables_path(dir));
  std::sort(d.tables.begin(), d.tables.end(), [](const Table& a, const Table& b) { return a.id < b.id; });
  for (Split s : {Split::Train, Split::Dev, Split::Test}) {
    const auto path = split_path(dir, s);
    if (std::filesystem::exists(path)) d.split(s) = load_examples(path);
  }
  return d;
}

}  // namespace nl2sql
