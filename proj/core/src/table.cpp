#include "nl2sql/table.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "nl2sql/error.hpp"

namespace nl2sql {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(const std::string& table_id, std::vector<std::string> problems)
    : Error("ValidationError", "table '" + table_id + "': " + join(problems, "; ")),
      table_id_(table_id),
      problems_(std::move(problems)) {}

std::string_view to_string(ColumnType t) { return t == ColumnType::Text ? "text" : "real"; }

std::string normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  std::size_t i = 0;
  std::string digits;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    if (s[i] == '-') digits.push_back('-');
    ++i;
  }
  // Integer part: plain digits, or 1-3 digits followed by ",ddd" groups.
  std::size_t group = 0;
  bool saw_comma = false;
  int int_digits = 0;
  for (; i < s.size(); ++i) {
    if (is_digit(s[i])) {
      digits.push_back(s[i]);
      ++group;
      ++int_digits;
    } else if (s[i] == ',') {
      if (group == 0 || group > 3 || (saw_comma && group != 3)) return std::nullopt;
      saw_comma = true;
      group = 0;
    } else {
      break;
    }
  }
  if (saw_comma && group != 3) return std::nullopt;
  int frac_digits = 0;
  if (i < s.size() && s[i] == '.') {
    digits.push_back('.');
    ++i;
    for (; i < s.size() && is_digit(s[i]); ++i) {
      digits.push_back(s[i]);
      ++frac_digits;
    }
  }
  if (i != s.size() || int_digits + frac_digits == 0) return std::nullopt;
  if (digits.back() == '.') digits.pop_back();
  if (digits.front() == '.' || (digits.size() > 1 && digits[0] == '-' && digits[1] == '.')) {
    digits.insert(digits.front() == '-' ? 1 : 0, "0");
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::string format_number(double x) {
  if (x == 0.0) return "0";
  char buf[400];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed);
  if (ec != std::errc{}) throw NonFiniteValue("cannot format number");
  return std::string(buf, ptr);
}

Value Value::number(double x) {
  if (!std::isfinite(x)) throw NonFiniteValue("non-finite number cannot be stored in a table");
  return Value(x);
}

std::string Value::normalized() const {
  return is_text() ? normalize_text(as_text()) : format_number(as_number());
}

std::string Value::display() const { return is_text() ? as_text() : format_number(as_number()); }

bool operator<(const Value& a, const Value& b) {
  if (a.is_number() != b.is_number()) return a.is_number();
  if (a.is_number()) return a.as_number() < b.as_number();
  return a.as_text() < b.as_text();
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
  const std::string key = normalize_text(name);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (normalize_text(header[i].name) == key) return i;
  }
  return std::nullopt;
}

std::vector<ColumnType> infer_column_types(const std::vector<std::vector<std::string>>& raw_rows) {
  const std::size_t n = raw_rows.empty() ? 0 : raw_rows.front().size();
  std::vector<ColumnType> types(n, raw_rows.empty() ? ColumnType::Text : ColumnType::Real);
  for (const auto& row : raw_rows) {
    for (std::size_t c = 0; c < n && c < row.size(); ++c) {
      if (types[c] == ColumnType::Real && !parse_number(row[c])) types[c] = ColumnType::Text;
    }
  }
  return types;
}

Table validate_table(Table candidate) {
  std::vector<std::string> problems;
  const std::size_t n = candidate.header.size();
  if (candidate.id.empty()) problems.push_back("empty table id");
  if (n == 0) problems.push_back("table has no columns");

  std::set<std::string> seen;
  for (std::size_t c = 0; c < n; ++c) {
    const std::string key = normalize_text(candidate.header[c].name);
    if (key.empty()) {
      problems.push_back("empty header at column " + std::to_string(c));
      continue;
    }
    if (!seen.insert(key).second) {
      problems.push_back("duplicate column name '" + key + "' at column " + std::to_string(c));
    }
  }

  for (std::size_t r = 0; r < candidate.rows.size(); ++r) {
    const auto& row = candidate.rows[r];
    if (row.size() != n) {
      problems.push_back("row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                         " cells, expected " + std::to_string(n));
      continue;
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (row[c].type() != candidate.header[c].type) {
        problems.push_back("row " + std::to_string(r) + " column " + std::to_string(c) +
                           " holds " + std::string(to_string(row[c].type())) + ", column is " +
                           std::string(to_string(candidate.header[c].type)));
      } else if (row[c].is_number() && !std::isfinite(row[c].as_number())) {
        problems.push_back("row " + std::to_string(r) + " column " + std::to_string(c) +
                           " is not finite");
      }
    }
  }

  if (!problems.empty()) throw ValidationError(candidate.id, std::move(problems));
  return candidate;
}

Table make_table(std::string id, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& raw_rows) {
  Table t;
  t.id = std::move(id);
  const auto types = infer_column_types(raw_rows);
  for (std::size_t c = 0; c < header.size(); ++c) {
    t.header.push_back({header[c], c < types.size() ? types[c] : ColumnType::Text});
  }
  for (const auto& raw : raw_rows) {
    std::vector<Value> row;
    row.reserve(raw.size());
    for (std::size_t c = 0; c < raw.size(); ++c) {
      if (c < t.header.size() && t.header[c].type == ColumnType::Real) {
        row.push_back(Value::number(*parse_number(raw[c])));
      } else {
        row.push_back(Value::text(raw[c]));
      }
    }
    t.rows.push_back(std::move(row));
  }
  return validate_table(std::move(t));
}

nlohmann::json table_to_json(const Table& t) {
  nlohmann::json header = nlohmann::json::array();
  nlohmann::json types = nlohmann::json::array();
  for (const auto& col : t.header) {
    header.push_back(col.name);
    types.push_back(std::string(to_string(col.type)));
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& v : row) {
      if (v.is_text()) {
        cells.push_back(v.as_text());
      } else {
        cells.push_back(v.as_number());
      }
    }
    rows.push_back(std::move(cells));
  }
  return {{"id", t.id}, {"header", header}, {"types", types}, {"rows", rows}};
}

Table table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("table record is not a JSON object");
  for (const char* key : {"id", "header", "types", "rows"}) {
    if (!j.contains(key)) throw FormatError(std::string("table record missing '") + key + "'");
  }
  Table t;
  t.id = j.at("id").get<std::string>();
  const auto& header = j.at("header");
  const auto& types = j.at("types");
  if (!header.is_array() || !types.is_array() || header.size() != types.size()) {
    throw FormatError("table '" + t.id + "': header and types must be arrays of equal length");
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto type_name = types[c].get<std::string>();
    ColumnType type;
    if (type_name == "text") {
      type = ColumnType::Text;
    } else if (type_name == "real") {
      type = ColumnType::Real;
    } else {
      throw FormatError("table '" + t.id + "': unknown column type '" + type_name + "'");
    }
    t.header.push_back({header[c].get<std::string>(), type});
  }
  for (const auto& jrow : j.at("rows")) {
    if (!jrow.is_array()) throw FormatError("table '" + t.id + "': row is not an array");
    std::vector<Value> row;
    for (const auto& cell : jrow) {
      if (cell.is_string()) {
        row.push_back(Value::text(cell.get<std::string>()));
      } else if (cell.is_number()) {
        row.push_back(Value::number(cell.get<double>()));
      } else {
        throw FormatError("table '" + t.id + "': cell must be a string or a number");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<Table> load_tables(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open table file '" + path.string() + "'");
  std::vector<Table> tables;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_text(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed JSON in '" + path.string() + "': " + e.what(), line_no);
    }
    Table t;
    try {
      t = table_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad table record in '" + path.string() + "': " + e.what(), line_no);
    } catch (const FormatError& e) {
      throw FormatError(e.what(), line_no);
    }
    tables.push_back(validate_table(std::move(t)));
  }
  return tables;
}

void save_tables(const std::filesystem::path& path, std::span<const Table> tables) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write table file '" + path.string() + "'");
  for (const auto& t : tables) out << table_to_json(t).dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace nl2sql
