#include "nl2sql/sql.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include <nlohmann/json.hpp>

#include "nl2sql/error.hpp"
#include "nl2sql/tokenize.hpp"

namespace nl2sql {

std::string_view to_string(AggOp op) {
  switch (op) {
    case AggOp::None: return "";
    case AggOp::Count: return sqltok::kCount;
    case AggOp::Min: return sqltok::kMin;
    case AggOp::Max: return sqltok::kMax;
  }
  return "";
}

std::string_view to_string(CondOp op) {
  switch (op) {
    case CondOp::Eq: return sqltok::kEq;
    case CondOp::Gt: return sqltok::kGt;
    case CondOp::Lt: return sqltok::kLt;
  }
  return "";
}

ExecResult ExecResult::rows(std::vector<Value> values) {
  std::sort(values.begin(), values.end());
  ExecResult r;
  r.is_rows_ = true;
  r.values_ = std::move(values);
  return r;
}

ExecResult ExecResult::scalar(Value v) {
  ExecResult r;
  r.is_rows_ = false;
  r.values_.push_back(std::move(v));
  return r;
}

void check_query(const Query& q, const Schema& schema) {
  const std::size_t n = schema.size();
  if (q.select >= n) {
    throw InvalidQuery("SELECT column " + std::to_string(q.select) + " out of range");
  }
  if ((q.agg == AggOp::Min || q.agg == AggOp::Max) && schema[q.select].type != ColumnType::Real) {
    throw InvalidQuery(std::string(to_string(q.agg)) + " over text column '" +
                       schema[q.select].name + "'");
  }
  for (std::size_t i = 0; i < q.conditions.size(); ++i) {
    const auto& c = q.conditions[i];
    if (c.column >= n) {
      throw InvalidQuery("condition column " + std::to_string(c.column) + " out of range");
    }
    const auto& col = schema[c.column];
    if (c.op != CondOp::Eq && col.type != ColumnType::Real) {
      throw InvalidQuery("operator '" + std::string(to_string(c.op)) + "' on text column '" +
                         col.name + "'");
    }
    if (c.value.type() != col.type) {
      throw InvalidQuery("condition value type does not match column '" + col.name + "'");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (q.conditions[j] == c) throw InvalidQuery("duplicate condition on '" + col.name + "'");
    }
  }
}

namespace {

bool holds(const Condition& c, const Value& cell) {
  switch (c.op) {
    case CondOp::Eq:
      if (cell.is_text()) return normalize_text(cell.as_text()) == normalize_text(c.value.as_text());
      return cell.as_number() == c.value.as_number();
    case CondOp::Gt: return cell.as_number() > c.value.as_number();
    case CondOp::Lt: return cell.as_number() < c.value.as_number();
  }
  return false;
}

}  // namespace

std::vector<std::size_t> matching_rows(const Query& q, const Table& t) {
  check_query(q, t.header);
  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const bool ok = std::all_of(q.conditions.begin(), q.conditions.end(),
                                [&](const Condition& c) { return holds(c, row[c.column]); });
    if (ok) kept.push_back(r);
  }
  return kept;
}

ExecResult execute(const Query& q, const Table& t) {
  const auto kept = matching_rows(q, t);
  switch (q.agg) {
    case AggOp::None: {
      std::vector<Value> out;
      out.reserve(kept.size());
      for (auto r : kept) out.push_back(t.rows[r][q.select]);
      return ExecResult::rows(std::move(out));
    }
    case AggOp::Count:
      return ExecResult::scalar(Value::number(static_cast<double>(kept.size())));
    case AggOp::Min:
    case AggOp::Max: {
      if (kept.empty()) {
        throw EmptyAggregate(std::string(to_string(q.agg)) + " over an empty row set");
      }
      double best = t.rows[kept.front()][q.select].as_number();
      for (auto r : kept) {
        const double x = t.rows[r][q.select].as_number();
        best = q.agg == AggOp::Min ? std::min(best, x) : std::max(best, x);
      }
      return ExecResult::scalar(Value::number(best));
    }
  }
  throw InvalidQuery("unknown aggregation operator");
}

// --- Canonical string form ---------------------------------------------------

namespace {

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

std::string render_value(const Value& v) {
  return v.is_text() ? quote(normalize_text(v.as_text())) : format_number(v.as_number());
}

}  // namespace

std::string serialize_query(const Query& q, const Schema& schema) {
  std::string out = "SELECT ";
  if (q.agg != AggOp::None) {
    out += to_string(q.agg);
    out += ' ';
  }
  out += schema.at(q.select).name;
  out += " FROM table";
  for (std::size_t i = 0; i < q.conditions.size(); ++i) {
    const auto& c = q.conditions[i];
    out += i == 0 ? " WHERE " : " AND ";
    out += schema.at(c.column).name;
    out += ' ';
    out += to_string(c.op);
    out += ' ';
    out += render_value(c.value);
  }
  return out;
}

bool lf_equal(const Query& a, const Query& b, const Schema& schema) {
  return serialize_query(a, schema) == serialize_query(b, schema);
}

namespace {

class QueryParser {
 public:
  QueryParser(std::string_view text, const Schema& schema) : s_(text), schema_(schema) {}

  Query parse() {
    Query q;
    skip_ws();
    expect_keyword("SELECT");
    skip_ws();
    const std::size_t after_select = pos_;
    bool parsed = false;
    for (AggOp op : {AggOp::Count, AggOp::Min, AggOp::Max}) {
      if (!at_keyword(to_string(op))) continue;
      pos_ += to_string(op).size();
      skip_ws();
      if (auto col = try_column(); col && followed_by_keyword("FROM")) {
        q.agg = op;
        q.select = *col;
        parsed = true;
      } else {
        pos_ = after_select;
      }
      break;
    }
    if (!parsed) {
      auto col = try_column();
      if (!col) throw UnknownColumn("no column matches at offset " + std::to_string(pos_));
      q.select = *col;
    }
    skip_ws();
    expect_keyword("FROM");
    skip_ws();
    const std::size_t table_start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ == table_start) throw ParseError("expected table name", pos_);
    skip_ws();
    if (pos_ < s_.size()) {
      expect_keyword("WHERE");
      do {
        skip_ws();
        q.conditions.push_back(parse_condition());
        skip_ws();
      } while (consume_keyword("AND"));
      if (pos_ != s_.size()) throw ParseError("unexpected trailing text", pos_);
    }
    if ((q.agg == AggOp::Min || q.agg == AggOp::Max) &&
        schema_[q.select].type != ColumnType::Real) {
      throw TypeMismatch(std::string(to_string(q.agg)) + " requires a real column, '" +
                         schema_[q.select].name + "' is text");
    }
    for (std::size_t i = 0; i < q.conditions.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (q.conditions[i] == q.conditions[j]) throw InvalidQuery("duplicate condition");
      }
    }
    return q;
  }

 private:
  Condition parse_condition() {
    Condition c;
    const std::size_t col_pos = pos_;
    auto col = try_column();
    if (!col) throw UnknownColumn("no column matches at offset " + std::to_string(col_pos));
    c.column = *col;
    const auto& column = schema_[c.column];
    skip_ws();
    if (pos_ >= s_.size()) throw ParseError("expected operator", pos_);
    switch (s_[pos_]) {
      case '=': c.op = CondOp::Eq; break;
      case '>': c.op = CondOp::Gt; break;
      case '<': c.op = CondOp::Lt; break;
      default: throw ParseError("expected one of = > <", pos_);
    }
    ++pos_;
    if (c.op != CondOp::Eq && column.type != ColumnType::Real) {
      throw TypeMismatch("operator '" + std::string(to_string(c.op)) + "' on text column '" +
                         column.name + "'");
    }
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '\'') {
      const std::size_t open = pos_++;
      std::string text;
      for (;;) {
        if (pos_ >= s_.size()) throw ParseError("unterminated string literal", open);
        if (s_[pos_] == '\'') {
          if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '\'') {
            text.push_back('\'');
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        text.push_back(s_[pos_++]);
      }
      if (column.type == ColumnType::Real) {
        throw TypeMismatch("quoted text value for real column '" + column.name + "'");
      }
      c.value = Value::text(normalize_text(text));
      return c;
    }
    const std::size_t start = pos_;
    std::size_t end = pos_;
    while (end < s_.size() && !keyword_at(end, "AND")) ++end;
    std::string raw(s_.substr(start, end - start));
    while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.back()))) raw.pop_back();
    if (raw.empty()) throw ParseError("expected a value", start);
    pos_ = start + raw.size();
    if (column.type == ColumnType::Real) {
      auto x = parse_number(raw);
      if (!x) throw TypeMismatch("value '" + raw + "' is not a number for column '" + column.name + "'");
      c.value = Value::number(*x);
    } else {
      c.value = Value::text(normalize_text(raw));
    }
    return c;
  }

  // Longest column whose normalized name matches at pos_, ending at a word
  // boundary. Advances past it on success.
  std::optional<std::size_t> try_column() {
    std::optional<std::size_t> best;
    std::size_t best_len = 0;
    std::size_t best_end = pos_;
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      const std::string name = normalize_text(schema_[c].name);
      std::size_t i = pos_;
      std::size_t k = 0;
      while (k < name.size() && i < s_.size()) {
        if (name[k] == ' ') {
          if (!std::isspace(static_cast<unsigned char>(s_[i]))) break;
          while (i < s_.size() && std::isspace(static_cast<unsigned char>(s_[i]))) ++i;
          ++k;
          continue;
        }
        if (std::tolower(static_cast<unsigned char>(s_[i])) != static_cast<unsigned char>(name[k])) break;
        ++i;
        ++k;
      }
      if (k != name.size()) continue;
      if (i < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i]))) continue;
      if (name.size() > best_len) {
        best = c;
        best_len = name.size();
        best_end = i;
      }
    }
    if (best) pos_ = best_end;
    return best;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool keyword_at(std::size_t at, std::string_view kw) const {
    if (at > 0 && !std::isspace(static_cast<unsigned char>(s_[at - 1]))) return false;
    if (at + kw.size() > s_.size()) return false;
    for (std::size_t i = 0; i < kw.size(); ++i) {
      if (std::toupper(static_cast<unsigned char>(s_[at + i])) != kw[i]) return false;
    }
    return at + kw.size() == s_.size() || std::isspace(static_cast<unsigned char>(s_[at + kw.size()]));
  }

  bool at_keyword(std::string_view kw) const {
    if (pos_ + kw.size() > s_.size()) return false;
    for (std::size_t i = 0; i < kw.size(); ++i) {
      if (std::toupper(static_cast<unsigned char>(s_[pos_ + i])) != kw[i]) return false;
    }
    return pos_ + kw.size() == s_.size() || std::isspace(static_cast<unsigned char>(s_[pos_ + kw.size()]));
  }

  bool followed_by_keyword(std::string_view kw) {
    const std::size_t save = pos_;
    skip_ws();
    const bool ok = at_keyword(kw);
    pos_ = save;
    return ok;
  }

  bool consume_keyword(std::string_view kw) {
    if (!at_keyword(kw)) return false;
    pos_ += kw.size();
    return true;
  }

  void expect_keyword(std::string_view kw) {
    if (!consume_keyword(kw)) throw ParseError("expected " + std::string(kw), pos_);
  }

  std::string_view s_;
  const Schema& schema_;
  std::size_t pos_ = 0;
};

}  // namespace

Query parse_query(std::string_view text, const Schema& schema) {
  return QueryParser(text, schema).parse();
}

// --- Token grammar -------------------------------------------------------------

std::vector<std::string> column_tokens(const Column& c) { return tokenize(c.name); }

std::vector<std::string> value_tokens(const Value& v) { return tokenize(v.normalized()); }

std::vector<std::string> where_tokens(const Query& q, const Schema& schema) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < q.conditions.size(); ++i) {
    const auto& c = q.conditions[i];
    out.emplace_back(i == 0 ? sqltok::kWhere : sqltok::kAnd);
    for (auto& t : column_tokens(schema.at(c.column))) out.push_back(std::move(t));
    out.emplace_back(to_string(c.op));
    for (auto& t : value_tokens(c.value)) out.push_back(std::move(t));
  }
  out.emplace_back(sqltok::kEnd);
  return out;
}

std::vector<std::string> query_tokens(const Query& q, const Schema& schema) {
  std::vector<std::string> out;
  out.emplace_back(sqltok::kSelect);
  if (q.agg != AggOp::None) out.emplace_back(to_string(q.agg));
  for (auto& t : column_tokens(schema.at(q.select))) out.push_back(std::move(t));
  for (auto& t : where_tokens(q, schema)) out.push_back(std::move(t));
  return out;
}

namespace {

// Longest column whose token sequence is a prefix of tokens[pos...].
std::optional<std::pair<std::size_t, std::size_t>> match_column_span(
    std::span<const std::string> tokens, std::size_t pos, const Schema& schema) {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto name = column_tokens(schema[c]);
    if (name.empty() || pos + name.size() > tokens.size()) continue;
    if (!std::equal(name.begin(), name.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos))) {
      continue;
    }
    if (!best || name.size() > best->second) best = std::make_pair(c, name.size());
  }
  return best;
}

std::optional<CondOp> as_cond_op(const std::string& t) {
  if (t == sqltok::kEq) return CondOp::Eq;
  if (t == sqltok::kGt) return CondOp::Gt;
  if (t == sqltok::kLt) return CondOp::Lt;
  return std::nullopt;
}

// Parses the WHERE part beginning at tokens[pos]; returns the conditions.
std::vector<Condition> parse_where_stream(std::span<const std::string> tokens, std::size_t pos,
                                          const Schema& schema) {
  std::vector<Condition> conds;
  if (pos >= tokens.size()) throw StructureError("missing END");
  if (tokens[pos] == sqltok::kEnd) {
    if (pos + 1 != tokens.size()) throw StructureError("tokens after END");
    return conds;
  }
  if (tokens[pos] != sqltok::kWhere) throw StructureError("expected WHERE or END, got '" + tokens[pos] + "'");
  ++pos;
  for (;;) {
    auto span = match_column_span(tokens, pos, schema);
    if (!span) throw StructureError("no column name at token " + std::to_string(pos));
    Condition c;
    c.column = span->first;
    pos += span->second;
    if (pos >= tokens.size()) throw StructureError("missing operator");
    auto op = as_cond_op(tokens[pos]);
    if (!op) throw StructureError("expected operator, got '" + tokens[pos] + "'");
    c.op = *op;
    ++pos;
    const std::size_t value_start = pos;
    while (pos < tokens.size() && tokens[pos] != sqltok::kAnd && tokens[pos] != sqltok::kEnd) ++pos;
    if (pos == value_start) throw StructureError("empty condition value");
    if (pos >= tokens.size()) throw StructureError("missing END");
    std::vector<std::string> value(tokens.begin() + static_cast<std::ptrdiff_t>(value_start),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(pos));
    const std::string raw = join_tokens(value, 0, value.size());
    const auto& col = schema[c.column];
    if (col.type == ColumnType::Real) {
      auto x = parse_number(raw);
      if (!x) throw StructureError("value '" + raw + "' is not a number for '" + col.name + "'");
      c.value = Value::number(*x);
    } else {
      if (c.op != CondOp::Eq) throw StructureError("comparison on text column '" + col.name + "'");
      c.value = Value::text(raw);
    }
    for (const auto& prev : conds) {
      if (prev == c) throw StructureError("duplicate condition");
    }
    conds.push_back(std::move(c));
    if (tokens[pos] == sqltok::kEnd) {
      if (pos + 1 != tokens.size()) throw StructureError("tokens after END");
      return conds;
    }
    ++pos;  // AND
  }
}

}  // namespace

std::vector<Condition> where_from_tokens(std::span<const std::string> tokens, const Schema& schema) {
  return parse_where_stream(tokens, 0, schema);
}

Query query_from_tokens(std::span<const std::string> tokens, const Schema& schema) {
  Query q;
  std::size_t pos = 0;
  if (tokens.empty() || tokens[0] != sqltok::kSelect) throw StructureError("expected SELECT");
  ++pos;
  if (pos < tokens.size()) {
    if (tokens[pos] == sqltok::kCount) {
      q.agg = AggOp::Count;
      ++pos;
    } else if (tokens[pos] == sqltok::kMin) {
      q.agg = AggOp::Min;
      ++pos;
    } else if (tokens[pos] == sqltok::kMax) {
      q.agg = AggOp::Max;
      ++pos;
    }
  }
  auto span = match_column_span(tokens, pos, schema);
  if (!span) throw StructureError("no SELECT column at token " + std::to_string(pos));
  q.select = span->first;
  pos += span->second;
  if ((q.agg == AggOp::Min || q.agg == AggOp::Max) && schema[q.select].type != ColumnType::Real) {
    throw StructureError("MIN/MAX over text column '" + schema[q.select].name + "'");
  }
  q.conditions = parse_where_stream(tokens, pos, schema);
  return q;
}

// --- JSON ------------------------------------------------------------------------

namespace {

nlohmann::json value_to_json(const Value& v) {
  if (v.is_text()) return v.as_text();
  return v.as_number();
}

}  // namespace

nlohmann::json query_to_json(const Query& q) {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : q.conditions) {
    conds.push_back({c.column, static_cast<int>(c.op), value_to_json(c.value)});
  }
  return {{"agg", static_cast<int>(q.agg)}, {"sel", q.select}, {"conds", conds}};
}

Query query_from_json(const nlohmann::json& j) {
  try {
    Query q;
    const int agg = j.at("agg").get<int>();
    if (agg < 0 || agg > 3) throw FormatError("agg code out of range");
    q.agg = static_cast<AggOp>(agg);
    q.select = j.at("sel").get<std::size_t>();
    for (const auto& jc : j.at("conds")) {
      if (!jc.is_array() || jc.size() != 3) throw FormatError("condition must be [col, op, value]");
      Condition c;
      c.column = jc[0].get<std::size_t>();
      const int op = jc[1].get<int>();
      if (op < 0 || op > 2) throw FormatError("op code out of range");
      c.op = static_cast<CondOp>(op);
      if (jc[2].is_string()) {
        c.value = Value::text(jc[2].get<std::string>());
      } else if (jc[2].is_number()) {
        c.value = Value::number(jc[2].get<double>());
      } else {
        throw FormatError("condition value must be a string or number");
      }
      q.conditions.push_back(std::move(c));
    }
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad query JSON: ") + e.what());
  }
}

nlohmann::json exec_result_to_json(const ExecResult& r) {
  if (!r.is_rows()) return {{"scalar", value_to_json(r.scalar_value())}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& v : r.row_values()) rows.push_back(value_to_json(v));
  return {{"rows", rows}};
}

}  // namespace nl2sql
