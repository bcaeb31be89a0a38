#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nl2sql/datagen.hpp"
#include "nl2sql/models.hpp"

namespace nl2sql {

enum class Outcome { Invalid, WrongResult, Correct };
std::string_view to_string(Outcome o);

// Invalid: no query assembled, or the executor rejects it. WrongResult: runs
// (or hits MIN/MAX over no rows) but differs from the gold result. Correct:
// equal results.
Outcome score_prediction(const Prediction& pred, const Query& gold, const Table& t);

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  bool undefined = false;  // some denominator was zero and reported as 0
};

// Binary precision/recall/F1 for "aggregation is COUNT".
Prf1 count_prf1(std::span<const Prediction> preds, std::span<const Example> examples);

struct ExampleRecord {
  std::string table_id;
  Outcome outcome = Outcome::Invalid;
  bool lf_match = false;
  std::string error;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t n_ex = 0;
  std::size_t n_lf = 0;
  std::size_t n_invalid = 0;
  double acc_ex = 0.0;
  double acc_lf = 0.0;
  double invalid_rate = 0.0;
  Prf1 count;
  std::vector<ExampleRecord> records;

  nlohmann::json to_json(bool with_records = false) const;
};

// Throws MissingPrediction when the counts differ and UnknownTable for an
// unresolvable table id. Queries that fail to execute count only toward n.
EvalReport evaluate(std::span<const Prediction> preds, std::span<const Example> examples, const Dataset& d);

std::vector<Prediction> predict_all(const Model& model, std::span<const Example> examples, const Dataset& d);

}  // namespace nl2sql
