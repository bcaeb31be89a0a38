#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nl2sql/rng.hpp"
#include "nl2sql/sql.hpp"
#include "nl2sql/table.hpp"

namespace nl2sql {

struct Example {
  std::string table_id;
  std::string question_raw;
  std::vector<std::string> question;  // tokenize(question_raw)
  Query gold;
};

enum class Split { Train, Dev, Test };
std::string_view to_string(Split s);

struct Dataset {
  std::vector<Table> tables;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::uint64_t seed = 0;
  std::vector<std::string> skipped_tables;  // tables that exhausted sampling

  const Table& table(std::string_view id) const;  // throws UnknownTable
  const std::vector<Example>& split(Split s) const;
  std::vector<Example>& split(Split s);
  std::size_t num_examples() const { return train.size() + dev.size() + test.size(); }
};

// --- Table filtering -------------------------------------------------------------

inline constexpr std::size_t kMaxCellChars = 50;
inline constexpr std::size_t kMinRows = 5;
inline constexpr std::size_t kMinColumns = 5;
inline constexpr double kMaxIdenticalFraction = 0.4;

// Keeps tables with no cell over 50 characters, no empty header, at least 5
// rows and 5 columns, and no row where more than 40% of cells are identical;
// then drops the last row of each survivor.
std::vector<Table> filter_tables(std::span<const Table> tables);

// --- Query sampling --------------------------------------------------------------

struct SampleOptions {
  std::size_t retry_budget = 100;
  // Number of conditions before minimization; uniform over {0, 1, 2} if unset.
  std::optional<std::size_t> num_conditions;
};

// Random query whose filter keeps at least one row. MIN/MAX are only drawn for
// real SELECT columns and '>'/'<' only for real condition columns. Equality
// values come from the column's cells; comparison values are uniform over the
// column's [min, max], rounded to its most precise cell. Throws
// SamplingExhausted after `retry_budget` rejected draws.
Query sample_query(const Table& t, Rng& rng, const SampleOptions& options = {});

// Repeatedly drops, in stored order, any condition whose removal leaves the
// execution result unchanged, until no single condition can be dropped.
Query minimize_conditions(const Query& q, const Table& t);

// --- Template questions ----------------------------------------------------------

inline constexpr std::size_t kTemplateVariants = 2;
inline constexpr std::string_view kTemplateBankVersion = "templates-v1";

// Normalized English question for q; every condition value appears verbatim.
std::string render_template_question(const Query& q, const Table& t, std::size_t variant);
std::string render_template_question(const Query& q, const Table& t, Rng& rng);

// Levenshtein distance with unit costs over bytes.
std::size_t char_edit_distance(std::string_view a, std::string_view b);

// A paraphrase is kept only when it differs from the generated question by
// more than 10 character edits.
inline constexpr std::size_t kMinParaphraseDistance = 10;
bool keep_paraphrase(std::string_view generated, std::string_view paraphrase);

// --- Dataset assembly --------------------------------------------------------------

struct SplitRatio {
  double train = 0.7;
  double dev = 0.1;
  double test = 0.2;
};

// Generates `per_table` examples for each table (sample, minimize, render)
// and assigns whole tables to splits with a seeded shuffle. Tables that
// exhaust their sampling budget are skipped and listed in skipped_tables.
// Tables are processed in id order; output is a pure function of the inputs.
Dataset build_dataset(std::vector<Table> tables, std::size_t per_table = 6, SplitRatio ratio = {},
                      std::uint64_t seed = 0);

// Histograms of column counts, question lengths and query lengths, plus
// counts of question-type prefixes, over all splits.
nlohmann::json dataset_stats(const Dataset& d);

// Seeded random tables with mixed text/real columns drawn from a fixed pool of
// column names; suitable input for filter_tables.
std::vector<Table> synthesize_tables(std::size_t count, std::uint64_t seed);

// --- Files -----------------------------------------------------------------------

nlohmann::json example_to_json(const Example& e);
Example example_from_json(const nlohmann::json& j);

// Writes tables.jsonl, examples.{train,dev,test}.jsonl into `dir`.
void save_dataset(const std::filesystem::path& dir, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& dir);
std::vector<Example> load_examples(const std::filesystem::path& path);
void save_examples(const std::filesystem::path& path, std::span<const Example> examples);

std::filesystem::path tables_path(const std::filesystem::path& dir);
std::filesystem::path split_path(const std::filesystem::path& dir, Split s);

}  // namespace nl2sql
