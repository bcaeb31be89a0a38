#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nl2sql/table.hpp"

namespace nl2sql {

// Wire codes are fixed: 0=no aggregation, 1=COUNT, 2=MIN, 3=MAX.
enum class AggOp { None = 0, Count = 1, Min = 2, Max = 3 };
// Wire codes: 0 '=', 1 '>', 2 '<'.
enum class CondOp { Eq = 0, Gt = 1, Lt = 2 };

inline constexpr std::array<AggOp, 4> kAllAggOps = {AggOp::None, AggOp::Count, AggOp::Min,
                                                    AggOp::Max};

std::string_view to_string(AggOp op);  // "" for AggOp::None
std::string_view to_string(CondOp op);

struct Condition {
  std::size_t column = 0;
  CondOp op = CondOp::Eq;
  Value value;

  friend bool operator==(const Condition&, const Condition&) = default;
};

struct Query {
  AggOp agg = AggOp::None;
  std::size_t select = 0;
  std::vector<Condition> conditions;

  friend bool operator==(const Query&, const Query&) = default;
};

// Result of execution. Rows are kept sorted so that equality is multiset
// equality; a COUNT/MIN/MAX result is a single scalar.
class ExecResult {
 public:
  static ExecResult rows(std::vector<Value> values);
  static ExecResult scalar(Value v);

  bool is_rows() const noexcept { return is_rows_; }
  const std::vector<Value>& row_values() const noexcept { return values_; }
  const Value& scalar_value() const { return values_.front(); }

  friend bool operator==(const ExecResult&, const ExecResult&) = default;

 private:
  bool is_rows_ = true;
  std::vector<Value> values_;
};

// Throws InvalidQuery when `q` breaks a Query invariant against `schema`:
// column out of range, MIN/MAX on a text column, '>'/'<' on a text column,
// a condition value of the wrong type, or an exact duplicate condition.
void check_query(const Query& q, const Schema& schema);

// Indices of rows satisfying every condition. Text equality compares
// normalized forms; numbers compare exactly.
std::vector<std::size_t> matching_rows(const Query& q, const Table& t);

// Throws InvalidQuery (see check_query) or EmptyAggregate for MIN/MAX over
// no rows. An empty row set for a non-aggregated query is a valid result.
ExecResult execute(const Query& q, const Table& t);

// Canonical surface form:
//   SELECT [AGG ]col FROM table[ WHERE c1 op v1[ AND c2 op v2 ...]]
// Text values are normalized and single-quoted ('' escapes a quote), numbers
// use format_number.
std::string serialize_query(const Query& q, const Schema& schema);

// Inverse of serialize_query. Keywords are case-insensitive, column names are
// matched by normalized form preferring the longest match. Unquoted values are
// accepted for text columns. Throws ParseError, UnknownColumn, TypeMismatch or
// InvalidQuery.
Query parse_query(std::string_view text, const Schema& schema);

// Exact match of canonical serializations; condition order matters.
bool lf_equal(const Query& a, const Query& b, const Schema& schema);

// --- Decoder token grammar -------------------------------------------------

namespace sqltok {
inline constexpr std::string_view kSelect = "SELECT";
inline constexpr std::string_view kWhere = "WHERE";
inline constexpr std::string_view kAnd = "AND";
inline constexpr std::string_view kCount = "COUNT";
inline constexpr std::string_view kMin = "MIN";
inline constexpr std::string_view kMax = "MAX";
inline constexpr std::string_view kEq = "=";
inline constexpr std::string_view kGt = ">";
inline constexpr std::string_view kLt = "<";
inline constexpr std::string_view kEnd = "END";
}  // namespace sqltok

// The SQL vocabulary spliced into every pointer-network input.
inline constexpr std::array<std::string_view, 10> kSqlVocab = {
    sqltok::kSelect, sqltok::kWhere, sqltok::kAnd, sqltok::kCount, sqltok::kMin,
    sqltok::kMax,    sqltok::kEq,    sqltok::kGt,  sqltok::kLt,    sqltok::kEnd};

// Column tokens are tokenize(column name); value tokens are tokenize of the
// normalized value. Keywords are upper case, so they never collide with
// (lower-cased) question or column tokens.
std::vector<std::string> column_tokens(const Column& c);
std::vector<std::string> value_tokens(const Value& v);

// [WHERE c op v (AND c op v)* END], or [END] for no conditions.
std::vector<std::string> where_tokens(const Query& q, const Schema& schema);
// [SELECT (agg)? col-tokens] followed by where_tokens.
std::vector<std::string> query_tokens(const Query& q, const Schema& schema);

// Rebuilds the WHERE conditions from a decoded stream. Column spans match the
// longest schema name; a value runs up to the next AND/END. Any violation,
// including type errors, throws StructureError.
std::vector<Condition> where_from_tokens(std::span<const std::string> tokens,
                                         const Schema& schema);
// Full-query variant of the above for the augmented pointer network.
Query query_from_tokens(std::span<const std::string> tokens, const Schema& schema);

// Structured JSON form {"agg": 0-3, "sel": int, "conds": [[col, op, value]]}.
nlohmann::json query_to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);
nlohmann::json exec_result_to_json(const ExecResult& r);

}  // namespace nl2sql
