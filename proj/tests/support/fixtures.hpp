#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "nl2sql/datagen.hpp"
#include "nl2sql/rng.hpp"
#include "nl2sql/sql.hpp"
#include "nl2sql/table.hpp"

namespace nl2sql::fx {

// Race-entry table with several "Val Musetti" rows.
inline Table racing_table() {
  return make_table("racing", {"Entrant", "Constructor", "Chassis", "Engine", "No", "Driver"},
                    {
                        {"Arciero Brothers", "Maserati", "250F", "Maserati Straight-6", "30", "Val Musetti"},
                        {"Scuderia Ferrari", "Ferrari", "625", "Ferrari 555", "12", "Alberto Ascari"},
                        {"Arciero Brothers", "Maserati", "A6GCM", "Maserati A6", "31", "Val Musetti"},
                        {"Officine Alfieri", "Maserati", "250F", "Maserati Straight-6", "18", "Stirling Moss"},
                        {"Privateer", "Cooper", "T23", "Bristol BS1", "40", "Val  MUSETTI"},
                        {"Gordini", "Gordini", "T16", "Gordini 23", "8", "Jean Behra"},
                    });
}

// Draft-pick table whose first two headers are "Pick #" and "CFL Team".
inline Table draft_table() {
  return make_table("draft", {"Pick #", "CFL Team", "Player", "Position", "College"},
                    {
                        {"27", "Hamilton Tiger-Cats", "Connor Healy", "DB", "Wilfrid Laurier"},
                        {"28", "Calgary Stampeders", "Anthony Forgione", "OL", "York"},
                        {"29", "Ottawa Renegades", "L.P. Ladouceur", "DT", "California"},
                        {"30", "Toronto Argonauts", "Frank Hoffman", "DL", "York"},
                        {"31", "Saskatchewan Roughriders", "Doug Battaglia", "LB", "Guelph"},
                    });
}

// Small random table with a tiny value pool so equality conditions match.
inline Table random_table(Rng& rng, const std::string& id) {
  static const char* kWords[] = {"alpha", "beta", "gamma", "delta", "Alpha", "BETA  x"};
  const std::size_t ncols = 2 + rng.index(4);
  const std::size_t nrows = rng.index(7);
  Table t;
  t.id = id;
  for (std::size_t c = 0; c < ncols; ++c) {
    t.header.push_back({"c" + std::to_string(c), rng.bernoulli(0.5) ? ColumnType::Real : ColumnType::Text});
  }
  for (std::size_t r = 0; r < nrows; ++r) {
    std::vector<Value> row;
    for (const auto& col : t.header) {
      if (col.type == ColumnType::Real) {
        row.push_back(Value::number(static_cast<double>(rng.index(5)) - 1.0 + (rng.bernoulli(0.3) ? 0.5 : 0.0)));
      } else {
        row.push_back(Value::text(kWords[rng.index(std::size(kWords))]));
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Random valid query against the schema; filters may well match nothing.
inline Query random_query(const Table& t, Rng& rng) {
  Query q;
  q.select = rng.index(t.num_columns());
  const bool real_sel = t.header[q.select].type == ColumnType::Real;
  q.agg = static_cast<AggOp>(rng.index(real_sel ? 4 : 2));
  const std::size_t nconds = rng.index(4);
  for (std::size_t i = 0; i < nconds; ++i) {
    Condition c;
    c.column = rng.index(t.num_columns());
    if (t.header[c.column].type == ColumnType::Real) {
      c.op = static_cast<CondOp>(rng.index(3));
      c.value = Value::number(static_cast<double>(rng.index(5)) - 1.0);
    } else {
      c.op = CondOp::Eq;
      static const char* kProbe[] = {"alpha", "beta", "beta x", "zeta"};
      c.value = Value::text(kProbe[rng.index(std::size(kProbe))]);
    }
    if (std::find(q.conditions.begin(), q.conditions.end(), c) == q.conditions.end()) {
      q.conditions.push_back(c);
    }
  }
  return q;
}

// Independent row-scan executor used as an oracle. It lowercases and squeezes
// text by hand and builds results without sharing any executor code.
struct OracleResult {
  bool error = false;      // MIN/MAX over no rows
  bool scalar = false;
  std::vector<std::string> rows;  // sorted rendered values
  double number = 0.0;
};

inline std::string squeeze_lower(const std::string& s) {
  std::string out;
  bool space = false;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

inline OracleResult oracle_execute(const Query& q, const Table& t) {
  std::vector<const std::vector<Value>*> kept;
  for (const auto& row : t.rows) {
    bool ok = true;
    for (const auto& c : q.conditions) {
      const Value& cell = row[c.column];
      if (cell.is_text()) {
        ok = ok && squeeze_lower(cell.as_text()) == squeeze_lower(c.value.as_text());
      } else {
        const double a = cell.as_number(), b = c.value.as_number();
        ok = ok && (c.op == CondOp::Eq ? a == b : c.op == CondOp::Gt ? a > b : a < b);
      }
    }
    if (ok) kept.push_back(&row);
  }
  OracleResult r;
  switch (q.agg) {
    case AggOp::None: {
      for (const auto* row : kept) {
        const Value& v = (*row)[q.select];
        std::ostringstream os;
        os.precision(17);
        if (v.is_text()) os << "T:" << v.as_text();
        else os << "N:" << v.as_number();
        r.rows.push_back(os.str());
      }
      std::sort(r.rows.begin(), r.rows.end());
      break;
    }
    case AggOp::Count:
      r.scalar = true;
      r.number = static_cast<double>(kept.size());
      break;
    case AggOp::Min:
    case AggOp::Max: {
      r.scalar = true;
      if (kept.empty()) {
        r.error = true;
        break;
      }
      double best = (*kept[0])[q.select].as_number();
      for (const auto* row : kept) {
        const double x = (*row)[q.select].as_number();
        best = q.agg == AggOp::Min ? std::min(best, x) : std::max(best, x);
      }
      r.number = best;
      break;
    }
  }
  return r;
}

// Converts an executor result into the oracle's representation.
inline OracleResult as_oracle(const ExecResult& e) {
  OracleResult r;
  if (!e.is_rows()) {
    r.scalar = true;
    r.number = e.scalar_value().as_number();
    return r;
  }
  for (const auto& v : e.row_values()) {
    std::ostringstream os;
    os.precision(17);
    if (v.is_text()) os << "T:" << v.as_text();
    else os << "N:" << v.as_number();
    r.rows.push_back(os.str());
  }
  std::sort(r.rows.begin(), r.rows.end());
  return r;
}

inline bool same_result(const OracleResult& a, const OracleResult& b) {
  return a.error == b.error && a.scalar == b.scalar && a.rows == b.rows && a.number == b.number;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("nl2sql_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace nl2sql::fx
