#include "nl2sql/eval.hpp"

#include <nlohmann/json.hpp>

#include "nl2sql/error.hpp"

namespace nl2sql {

using nlohmann::json;

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Invalid: return "invalid";
    case Outcome::WrongResult: return "wrong_result";
    case Outcome::Correct: return "correct";
  }
  return "?";
}

Outcome score_prediction(const Prediction& pred, const Query& gold, const Table& t) {
  if (!pred.valid()) return Outcome::Invalid;
  ExecResult got;
  try {
    got = execute(*pred.query, t);
  } catch (const InvalidQuery&) {
    return Outcome::Invalid;
  } catch (const EmptyAggregate&) {
    return Outcome::WrongResult;
  }
  try {
    return got == execute(gold, t) ? Outcome::Correct : Outcome::WrongResult;
  } catch (const EmptyAggregate&) {
    return Outcome::WrongResult;
  }
}

Prf1 count_prf1(std::span<const Prediction> preds, std::span<const Example> examples) {
  if (preds.size() != examples.size()) {
    throw MissingPrediction(std::to_string(preds.size()) + " predictions for " +
                            std::to_string(examples.size()) + " examples");
  }
  Prf1 r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i].valid() && preds[i].agg == AggOp::Count;
    const bool g = examples[i].gold.agg == AggOp::Count;
    if (p && g) ++r.tp;
    if (p && !g) ++r.fp;
    if (!p && g) ++r.fn;
  }
  auto ratio = [&](std::size_t num, std::size_t den) {
    if (den == 0) {
      r.undefined = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.undefined = true;
  }
  return r;
}

EvalReport evaluate(std::span<const Prediction> preds, std::span<const Example> examples, const Dataset& d) {
  if (preds.size() != examples.size()) {
    throw MissingPrediction(std::to_string(preds.size()) + " predictions for " +
                            std::to_string(examples.size()) + " examples");
  }
  EvalReport r;
  r.n = examples.size();
  for (std::size_t i = 0; i < r.n; ++i) {
    const Example& e = examples[i];
    const Table& t = d.table(e.table_id);
    ExampleRecord rec;
    rec.table_id = e.table_id;
    rec.outcome = score_prediction(preds[i], e.gold, t);
    // A string match implies equal execution, so only executable, correct
    // predictions are compared (an invalid one may name a missing column).
    rec.lf_match = rec.outcome == Outcome::Correct && lf_equal(*preds[i].query, e.gold, t.header);
    rec.error = preds[i].error;
    r.n_ex += rec.outcome == Outcome::Correct;
    r.n_lf += rec.lf_match;
    r.n_invalid += rec.outcome == Outcome::Invalid;
    r.records.push_back(std::move(rec));
  }
  if (r.n > 0) {
    const auto n = static_cast<double>(r.n);
    r.acc_ex = static_cast<double>(r.n_ex) / n;
    r.acc_lf = static_cast<double>(r.n_lf) / n;
    r.invalid_rate = static_cast<double>(r.n_invalid) / n;
  }
  r.count = count_prf1(preds, examples);
  return r;
}

json EvalReport::to_json(bool with_records) const {
  json j = {{"n", n},
            {"n_ex", n_ex},
            {"n_lf", n_lf},
            {"n_invalid", n_invalid},
            {"acc_ex", acc_ex},
            {"acc_lf", acc_lf},
            {"invalid_rate", invalid_rate},
            {"count", {{"precision", count.precision},
                       {"recall", count.recall},
                       {"f1", count.f1},
                       {"tp", count.tp},
                       {"fp", count.fp},
                       {"fn", count.fn},
                       {"undefined", count.undefined}}}};
  if (with_records) {
    json recs = json::array();
    for (const auto& r : records) {
      json rec = {{"table_id", r.table_id}, {"cause", std::string(to_string(r.outcome))}, {"lf_match", r.lf_match}};
      if (!r.error.empty()) rec["error"] = r.error;
      recs.push_back(std::move(rec));
    }
    j["records"] = std::move(recs);
  }
  return j;
}

std::vector<Prediction> predict_all(const Model& model, std::span<const Example> examples, const Dataset& d) {
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(model.predict(model.prepare(e, d.table(e.table_id))));
  return out;
}

}  // namespace nl2sql
