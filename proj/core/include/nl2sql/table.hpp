#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace nl2sql {

enum class ColumnType { Text, Real };

std::string_view to_string(ColumnType t);

// Lowercase, trim, collapse internal whitespace runs to one space.
std::string normalize_text(std::string_view s);

// Parses a finite decimal number: optional sign, digits with an optional
// single decimal point, and optional well-formed thousands separators in the
// integer part ("1,234.5"). No exponents. Returns nullopt otherwise.
std::optional<double> parse_number(std::string_view s);

// Shortest fixed-notation decimal that round-trips to the same double.
std::string format_number(double x);

// A table cell. Numbers are always finite; text is stored verbatim.
class Value {
 public:
  Value() : v_(std::string{}) {}

  static Value text(std::string s) { return Value(std::move(s)); }
  static Value number(double x);  // throws NonFiniteValue

  bool is_text() const noexcept { return std::holds_alternative<std::string>(v_); }
  bool is_number() const noexcept { return std::holds_alternative<double>(v_); }
  const std::string& as_text() const { return std::get<std::string>(v_); }
  double as_number() const { return std::get<double>(v_); }

  ColumnType type() const noexcept { return is_text() ? ColumnType::Text : ColumnType::Real; }

  // Text: normalize_text of the stored string. Number: format_number.
  std::string normalized() const;
  // Text verbatim, number via format_number.
  std::string display() const;

  friend bool operator==(const Value&, const Value&) = default;
  // Total order: numbers before text, numbers by value, text bytewise.
  friend bool operator<(const Value& a, const Value& b);

 private:
  explicit Value(std::string s) : v_(std::move(s)) {}
  explicit Value(double x) : v_(x) {}
  std::variant<std::string, double> v_;
};

struct Column {
  std::string name;
  ColumnType type = ColumnType::Text;

  friend bool operator==(const Column&, const Column&) = default;
};

using Schema = std::vector<Column>;

struct Table {
  std::string id;
  Schema header;
  std::vector<std::vector<Value>> rows;

  std::size_t num_columns() const noexcept { return header.size(); }
  std::size_t num_rows() const noexcept { return rows.size(); }

  // Index of the column whose normalized name equals normalize_text(name).
  std::optional<std::size_t> find_column(std::string_view name) const;

  friend bool operator==(const Table&, const Table&) = default;
};

// A column is Real iff it has at least one row and every cell parses with
// parse_number; Text otherwise.
std::vector<ColumnType> infer_column_types(const std::vector<std::vector<std::string>>& raw_rows);

// Checks every Table invariant and returns the table unchanged, or throws a
// ValidationError listing each violation with its row/column.
Table validate_table(Table candidate);

// Builds a table from raw string cells, inferring column types.
Table make_table(std::string id, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& raw_rows);

nlohmann::json table_to_json(const Table& t);
Table table_from_json(const nlohmann::json& j);

// One JSON object per line:
//   {"id": str, "header": [str], "types": ["text"|"real"], "rows": [[str|num]]}
std::vector<Table> load_tables(const std::filesystem::path& path);
void save_tables(const std::filesystem::path& path, std::span<const Table> tables);

}  // namespace nl2sql
