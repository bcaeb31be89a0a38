#include "nl2sql/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "nl2sql/error.hpp"

namespace nl2sql {

using ad::Graph;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

// --- input layout ------------------------------------------------------------------

std::size_t InputSequence::sql_position(std::string_view keyword) const {
  for (std::size_t i = 0; i < kSqlVocab.size(); ++i) {
    if (kSqlVocab[i] == keyword) return sql_begin + i;
  }
  throw StructureError("'" + std::string(keyword) + "' is not a SQL vocabulary token");
}

InputSequence build_input_sequence(const Schema& schema, std::span<const Token> question,
                                   const Vocabulary& vocab) {
  if (schema.empty()) throw EmptyInput("input sequence needs at least one column");
  if (question.empty()) throw EmptyInput("input sequence needs a nonempty question");
  InputSequence in;
  auto push = [&](std::string token, Segment seg, std::string gloss) {
    in.ids.push_back(vocab.id(token));
    in.tokens.push_back(std::move(token));
    in.segments.push_back(seg);
    in.glosses.push_back(std::move(gloss));
  };
  push(std::string(kColumnSentinel), Segment::Sentinel, std::string(kColumnSentinel));
  for (const auto& c : schema) {
    const std::size_t begin = in.size();
    for (auto& t : tokenize_with_gloss(c.name)) push(std::move(t.text), Segment::Column, std::move(t.gloss));
    in.column_spans.emplace_back(begin, in.size());
  }
  push(std::string(kSqlSentinel), Segment::Sentinel, std::string(kSqlSentinel));
  in.sql_begin = in.size();
  for (auto kw : kSqlVocab) push(std::string(kw), Segment::Sql, std::string(kw));
  push(std::string(kQuestionSentinel), Segment::Sentinel, std::string(kQuestionSentinel));
  in.question_begin = in.size();
  for (const auto& t : question) push(t.text, Segment::Question, t.gloss);
  return in;
}

InputSequence build_input_sequence(const Schema& schema, std::string_view question,
                                   const Vocabulary& vocab) {
  const auto tokens = tokenize_with_gloss(question);
  return build_input_sequence(schema, std::span<const Token>(tokens), vocab);
}

namespace {

bool append_value_targets(const std::vector<std::string>& value, const InputSequence& in,
                          std::vector<std::size_t>& out) {
  const std::size_t n = value.size();
  for (std::size_t s = in.question_begin; s + n <= in.size(); ++s) {
    if (std::equal(value.begin(), value.end(), in.tokens.begin() + static_cast<std::ptrdiff_t>(s))) {
      for (std::size_t k = 0; k < n; ++k) out.push_back(s + k);
      return true;
    }
  }
  for (const auto& tok : value) {
    auto it = std::find(in.tokens.begin(), in.tokens.end(), tok);
    if (it == in.tokens.end()) return false;
    out.push_back(static_cast<std::size_t>(it - in.tokens.begin()));
  }
  return true;
}

void append_column_targets(std::size_t column, const InputSequence& in, std::vector<std::size_t>& out) {
  const auto [begin, end] = in.column_spans.at(column);
  for (std::size_t i = begin; i < end; ++i) out.push_back(i);
}

std::string_view agg_keyword(AggOp agg) {
  switch (agg) {
    case AggOp::Count: return sqltok::kCount;
    case AggOp::Min: return sqltok::kMin;
    case AggOp::Max: return sqltok::kMax;
    case AggOp::None: break;
  }
  return {};
}

std::string_view op_keyword(CondOp op) {
  switch (op) {
    case CondOp::Eq: return sqltok::kEq;
    case CondOp::Gt: return sqltok::kGt;
    case CondOp::Lt: return sqltok::kLt;
  }
  return sqltok::kEq;
}

}  // namespace

std::optional<std::vector<std::size_t>> pointer_targets(const Query& q, const InputSequence& in,
                                                        bool full_query) {
  std::vector<std::size_t> out;
  if (full_query) {
    out.push_back(in.sql_position(sqltok::kSelect));
    if (q.agg != AggOp::None) out.push_back(in.sql_position(agg_keyword(q.agg)));
    append_column_targets(q.select, in, out);
  }
  if (!q.conditions.empty()) {
    out.push_back(in.sql_position(sqltok::kWhere));
    for (std::size_t i = 0; i < q.conditions.size(); ++i) {
      const Condition& c = q.conditions[i];
      if (i > 0) out.push_back(in.sql_position(sqltok::kAnd));
      append_column_targets(c.column, in, out);
      out.push_back(in.sql_position(op_keyword(c.op)));
      if (!append_value_targets(value_tokens(c.value), in, out)) return std::nullopt;
    }
  }
  out.push_back(in.end_position());
  return out;
}

Vocabulary build_vocabulary(std::span<const Example> examples, const Dataset& d) {
  Vocabulary v;
  v.add(std::string(kColumnSentinel));
  v.add(std::string(kSqlSentinel));
  v.add(std::string(kQuestionSentinel));
  for (auto kw : kSqlVocab) v.add(std::string(kw));
  for (const auto& e : examples) {
    for (const auto& c : d.table(e.table_id).header) {
      for (const auto& t : column_tokens(c)) v.add(t);
    }
    for (const auto& t : e.question) v.add(t);
  }
  return v;
}

Vocabulary build_target_vocabulary(std::span<const Example> examples, const Dataset& d,
                                   std::size_t max_size) {
  Vocabulary v;
  for (auto kw : kSqlVocab) v.add(std::string(kw));
  std::map<std::string, std::size_t> counts;
  for (const auto& e : examples) {
    for (const auto& c : d.table(e.table_id).header) {
      for (const auto& t : column_tokens(c)) ++counts[t];
    }
    for (const auto& t : e.question) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

// --- config ------------------------------------------------------------------------

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::AugPtr: return "aug_ptr";
    case ModelKind::Seq2Sql: return "seq2sql";
    case ModelKind::Baseline: return "baseline";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
  for (auto k : {ModelKind::AugPtr, ModelKind::Seq2Sql, ModelKind::Baseline}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown model kind '" + std::string(s) + "' (expected aug_ptr, seq2sql or baseline)");
}

json ModelConfig::to_json() const {
  return {{"kind", std::string(to_string(kind))},
          {"emb_dim", emb_dim},
          {"hidden", hidden},
          {"layers", layers},
          {"dropout", dropout},
          {"max_decode_len", max_decode_len},
          {"beam", beam},
          {"feed_pointed_state", feed_pointed_state}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.emb_dim = j.at("emb_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.max_decode_len = j.at("max_decode_len").get<std::size_t>();
    c.beam = j.at("beam").get<std::size_t>();
    c.feed_pointed_state = j.at("feed_pointed_state").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
  return c;
}

// --- predictions -------------------------------------------------------------------

Prediction assemble_prediction(AggOp agg, std::size_t sel, std::span<const std::string> where_tokens,
                               const Schema& schema) {
  Prediction p;
  p.agg = agg;
  p.sel = sel;
  p.tokens.assign(where_tokens.begin(), where_tokens.end());
  try {
    Query q{agg, sel, where_from_tokens(where_tokens, schema)};
    check_query(q, schema);
    p.query = std::move(q);
  } catch (const StructureError& e) {
    p.error = e.what();
  } catch (const InvalidQuery& e) {
    p.error = e.what();
  }
  return p;
}

Prediction assemble_stream_prediction(std::span<const std::string> tokens, const Schema& schema) {
  Prediction p;
  p.tokens.assign(tokens.begin(), tokens.end());
  try {
    Query q = query_from_tokens(tokens, schema);
    check_query(q, schema);
    p.agg = q.agg;
    p.sel = q.select;
    p.query = std::move(q);
  } catch (const StructureError& e) {
    p.error = e.what();
  } catch (const InvalidQuery& e) {
    p.error = e.what();
  }
  return p;
}

json prediction_to_json(const Prediction& p, const Example& e) {
  json j;
  j["table_id"] = e.table_id;
  j["pred"] = p.query ? query_to_json(*p.query) : json{{"error", "structure"}};
  j["gold"] = query_to_json(e.gold);
  return j;
}

// --- shared pieces -----------------------------------------------------------------

namespace {

Var zeros(Graph& g, std::size_t rows, std::size_t cols) { return g.constant(Tensor(rows, cols)); }

std::vector<double> softmax_values(const Tensor& logits) {
  std::vector<double> p(logits.data().begin(), logits.data().end());
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& x : p) z += (x = std::exp(x - m));
  for (double& x : p) x /= z;
  return p;
}

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

Encoder make_encoder(ad::ParamStore& store, const ModelConfig& cfg, std::size_t vocab_size, Rng& rng) {
  Encoder e;
  e.embeddings = Embeddings::create(store, "enc.emb", vocab_size, cfg.emb_dim, rng);
  e.lstm = BiLstmParams::create(store, "enc.lstm", cfg.emb_dim, cfg.hidden, cfg.layers, rng);
  return e;
}

// Decoder initial hidden states from the top encoder layer's forward state at
// the last position and backward state at the first, one slice per layer.
std::vector<LstmState> initial_states(Graph& g, Var h, ad::Parameter& w, ad::Parameter& b,
                                      std::size_t layers, std::size_t hidden) {
  const std::size_t enc = h.cols() / 2;
  Var summary = ad::concat({ad::slice_cols(ad::row(h, h.rows() - 1), 0, enc),
                            ad::slice_cols(ad::row(h, 0), enc, enc)},
                           1);
  Var z = ad::tanh(ad::add(ad::matmul(summary, g.param(w)), g.param(b)));
  std::vector<LstmState> states;
  for (std::size_t l = 0; l < layers; ++l) {
    states.push_back({ad::slice_cols(z, l * hidden, hidden), zeros(g, 1, hidden)});
  }
  return states;
}

Var run_layers(Graph& g, Var x, std::vector<LstmState>& states, const std::vector<LstmParams>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    states[l] = lstm_cell(g, x, states[l], layers[l]);
    x = states[l].h;
  }
  return x;
}

PointerDecoder make_pointer_decoder(ad::ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                                    Rng& rng) {
  PointerDecoder d;
  const std::size_t enc = 2 * cfg.hidden;
  d.feed_pointed_state = cfg.feed_pointed_state;
  const std::size_t in = cfg.emb_dim + (cfg.feed_pointed_state ? enc : 0);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    d.layers.push_back(LstmParams::create(store, prefix + ".l" + std::to_string(l), l == 0 ? in : cfg.hidden,
                                          cfg.hidden, rng));
  }
  Tensor start(1, cfg.emb_dim);
  for (std::size_t i = 0; i < start.size(); ++i) start[i] = 0.1 * rng.normal();
  d.start = &store.add(prefix + ".start", std::move(start));
  d.init_w = &store.add(prefix + ".init_w", ad::glorot(enc, cfg.layers * cfg.hidden, rng));
  d.init_b = &store.add(prefix + ".init_b", Tensor(1, cfg.layers * cfg.hidden));
  d.w_ptr = &store.add(prefix + ".w_ptr", ad::glorot(cfg.hidden, 1, rng));
  d.u_ptr = &store.add(prefix + ".u_ptr", ad::glorot(cfg.hidden, cfg.hidden, rng));
  d.v_ptr = &store.add(prefix + ".v_ptr", ad::glorot(enc, cfg.hidden, rng));
  return d;
}

// Runs the pointer decoder. With `targets` it is teacher-forced and returns
// the summed cross entropy in `loss`; otherwise it decodes greedily or by
// sampling until END or max_len.
struct PointerRun {
  Var loss;
  PointerDecode decode;
};

PointerRun run_pointer(Graph& g, const PointerDecoder& d, const Embeddings& emb, const InputSequence& in,
                       Var h, const std::vector<std::size_t>* targets, DecodeMode mode, std::size_t max_len,
                       std::size_t hidden) {
  PointerRun run;
  auto states = initial_states(g, h, *d.init_w, *d.init_b, d.layers.size(), hidden);
  Var hv = ad::matmul(h, g.param(*d.v_ptr));
  Var w = g.param(*d.w_ptr);
  Var u = g.param(*d.u_ptr);
  const std::size_t end = in.end_position();
  std::optional<std::size_t> prev;
  std::vector<Var> losses;
  const std::size_t steps = targets ? targets->size() : max_len;
  for (std::size_t s = 0; s < steps; ++s) {
    Var x = prev ? emb.lookup(g, std::span<const int>(&in.ids[*prev], 1)) : g.param(*d.start);
    if (d.feed_pointed_state) x = ad::concat({x, prev ? ad::row(h, *prev) : zeros(g, 1, h.cols())}, 1);
    Var top = run_layers(g, x, states, d.layers);
    Var scores = pointer_scores_projected(g, top, hv, w, u);
    std::size_t pos;
    if (targets) {
      pos = (*targets)[s];
      losses.push_back(ad::cross_entropy(scores, pos));
    } else {
      if (mode == DecodeMode::Greedy) {
        pos = argmax(scores.value().data());
      } else {
        pos = sample_index(softmax_values(scores.value()), g.rng());
        run.decode.log_probs.push_back(ad::scale(ad::cross_entropy(scores, pos), -1.0));
      }
      run.decode.positions.push_back(pos);
      run.decode.tokens.push_back(in.tokens[pos]);
      if (pos == end) break;
    }
    prev = pos;
  }
  if (targets) run.loss = ad::sum(ad::concat(std::span<const Var>(losses), 1));
  return run;
}

}  // namespace

Var Encoder::encode(Graph& g, const InputSequence& in, double dropout) const {
  return bilstm_encode(g, embeddings.lookup(g, in.ids), lstm, dropout);
}

// --- Model base --------------------------------------------------------------------

Prepared Model::prepare(const Example& e, const Table& t) const {
  Prepared p;
  p.example = &e;
  p.table = &t;
  p.input = build_input_sequence(t.header, e.question_raw, vocab_);
  return p;
}

json Model::metadata() const {
  return {{"config", config_.to_json()}, {"vocab", vocab_.tokens()}};
}

namespace {

Vocabulary vocabulary_from_json(const json& j) {
  Vocabulary v;
  const auto tokens = j.get<std::vector<std::string>>();
  if (tokens.empty() || tokens[0] != Vocabulary::kUnknown) throw FormatError("vocabulary must start with <unk>");
  for (std::size_t i = 1; i < tokens.size(); ++i) v.add(tokens[i]);
  if (v.size() != tokens.size()) throw FormatError("vocabulary has duplicate tokens");
  return v;
}

}  // namespace

std::unique_ptr<Model> Model::create(const ModelConfig& config, Vocabulary vocab, Vocabulary target_vocab,
                                     std::uint64_t seed) {
  if (config.emb_dim == 0 || config.hidden == 0 || config.layers == 0) {
    throw ConfigError("model dimensions and layer count must be positive");
  }
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  switch (config.kind) {
    case ModelKind::AugPtr: return std::make_unique<AugPtrModel>(config, std::move(vocab), seed);
    case ModelKind::Seq2Sql: return std::make_unique<Seq2SqlModel>(config, std::move(vocab), seed);
    case ModelKind::Baseline:
      return std::make_unique<BaselineModel>(config, std::move(vocab), std::move(target_vocab), seed);
  }
  throw ConfigError("unknown model kind");
}

std::unique_ptr<Model> Model::from_metadata(const json& meta) {
  try {
    const auto config = ModelConfig::from_json(meta.at("config"));
    Vocabulary vocab = vocabulary_from_json(meta.at("vocab"));
    Vocabulary target;
    if (config.kind == ModelKind::Baseline) target = vocabulary_from_json(meta.at("target_vocab"));
    return create(config, std::move(vocab), std::move(target), 0);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model metadata: ") + e.what());
  }
}

// --- augmented pointer network -----------------------------------------------------

AugPtrModel::AugPtrModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed)
    : Model(config, std::move(vocab)) {
  Rng rng(seed);
  encoder_ = make_encoder(params_, config_, vocab_.size(), rng);
  decoder_ = make_pointer_decoder(params_, "dec", config_, rng);
}

Prepared AugPtrModel::prepare(const Example& e, const Table& t) const {
  Prepared p = Model::prepare(e, t);
  p.targets = pointer_targets(e.gold, p.input, true);
  return p;
}

LossParts AugPtrModel::supervised_loss(Graph& g, const Prepared& p) const {
  LossParts parts;
  if (!p.targets) return parts;
  Var h = encoder_.encode(g, p.input, config_.dropout);
  parts.whe = run_pointer(g, decoder_, encoder_.embeddings, p.input, h, &*p.targets, DecodeMode::Greedy, 0,
                          config_.hidden)
                  .loss;
  parts.total = parts.whe;
  return parts;
}

PointerDecode AugPtrModel::decode(Graph& g, const Prepared& p, DecodeMode mode, std::size_t max_len) const {
  Var h = encoder_.encode(g, p.input, config_.dropout);
  return run_pointer(g, decoder_, encoder_.embeddings, p.input, h, nullptr, mode, max_len, config_.hidden).decode;
}

Prediction AugPtrModel::predict(const Prepared& p) const {
  Graph g;
  auto d = decode(g, p, DecodeMode::Greedy, config_.max_decode_len);
  return assemble_stream_prediction(d.tokens, p.table->header);
}

// --- Seq2SQL -----------------------------------------------------------------------

Seq2SqlModel::Seq2SqlModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed)
    : Model(config, std::move(vocab)) {
  Rng rng(seed);
  const std::size_t h = config_.hidden, enc = 2 * h;
  encoder_ = make_encoder(params_, config_, vocab_.size(), rng);
  column_lstm_ = LstmParams::create(params_, "col.lstm", config_.emb_dim, h, rng);
  agg_inp_ = &params_.add("agg.inp", ad::glorot(enc, 1, rng));
  agg_v_ = &params_.add("agg.v", ad::glorot(enc, h, rng));
  agg_b_ = &params_.add("agg.b", Tensor(1, h));
  agg_w_ = &params_.add("agg.w", ad::glorot(h, kAllAggOps.size(), rng));
  agg_c_ = &params_.add("agg.c", Tensor(1, kAllAggOps.size()));
  sel_inp_ = &params_.add("sel.inp", ad::glorot(enc, 1, rng));
  sel_v_ = &params_.add("sel.v", ad::glorot(enc, h, rng));
  sel_vc_ = &params_.add("sel.vc", ad::glorot(h, h, rng));
  sel_w_ = &params_.add("sel.w", ad::glorot(h, 1, rng));
  decoder_ = make_pointer_decoder(params_, "whe", config_, rng);
}

Prepared Seq2SqlModel::prepare(const Example& e, const Table& t) const {
  Prepared p = Model::prepare(e, t);
  p.targets = pointer_targets(e.gold, p.input, false);
  return p;
}

Seq2SqlModel::Encoded Seq2SqlModel::encode(Graph& g, const Prepared& p) const {
  Encoded enc;
  enc.h = encoder_.encode(g, p.input, config_.dropout);
  std::vector<Var> cols;
  for (const auto& [begin, end] : p.input.column_spans) {
    std::span<const int> ids(p.input.ids.data() + begin, end - begin);
    cols.push_back(column_encode(g, encoder_.embeddings.lookup(g, ids), column_lstm_));
  }
  enc.columns = cols.size() == 1 ? cols[0] : ad::concat(std::span<const Var>(cols), 0);
  return enc;
}

Var Seq2SqlModel::agg_logits(Graph& g, const Encoded& enc) const {
  Var kappa = attention_pool(g, enc.h, g.param(*agg_inp_)).context;
  Var hidden = ad::tanh(ad::add(ad::matmul(kappa, g.param(*agg_v_)), g.param(*agg_b_)));
  return ad::add(ad::matmul(hidden, g.param(*agg_w_)), g.param(*agg_c_));
}

Var Seq2SqlModel::sel_logits(Graph& g, const Encoded& enc) const {
  Var kappa = attention_pool(g, enc.h, g.param(*sel_inp_)).context;
  Var act = ad::tanh(ad::add(ad::matmul(enc.columns, g.param(*sel_vc_)), ad::matmul(kappa, g.param(*sel_v_))));
  return ad::transpose(ad::matmul(act, g.param(*sel_w_)));
}

Var Seq2SqlModel::where_loss(Graph& g, const Encoded& enc, const Prepared& p) const {
  return run_pointer(g, decoder_, encoder_.embeddings, p.input, enc.h, &*p.targets, DecodeMode::Greedy, 0,
                     config_.hidden)
      .loss;
}

PointerDecode Seq2SqlModel::decode_where(Graph& g, const Encoded& enc, const Prepared& p, DecodeMode mode,
                                         std::size_t max_len) const {
  return run_pointer(g, decoder_, encoder_.embeddings, p.input, enc.h, nullptr, mode, max_len, config_.hidden)
      .decode;
}

LossParts Seq2SqlModel::supervised_loss(Graph& g, const Prepared& p) const {
  LossParts parts;
  Encoded enc = encode(g, p);
  const Query& gold = p.example->gold;
  parts.agg = ad::cross_entropy(agg_logits(g, enc), static_cast<std::size_t>(gold.agg));
  parts.sel = ad::cross_entropy(sel_logits(g, enc), gold.select);
  parts.total = ad::add(parts.agg, parts.sel);
  if (p.targets) {
    parts.whe = where_loss(g, enc, p);
    parts.total = ad::add(parts.total, parts.whe);
  }
  return parts;
}

std::pair<AggOp, std::size_t> Seq2SqlModel::best_valid_head(std::span<const double> agg_probs,
                                                            std::span<const double> sel_probs,
                                                            const Schema& schema) {
  std::pair<AggOp, std::size_t> best{AggOp::None, 0};
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < sel_probs.size(); ++s) {
    for (std::size_t a = 0; a < agg_probs.size(); ++a) {
      const auto agg = static_cast<AggOp>(a);
      if ((agg == AggOp::Min || agg == AggOp::Max) && schema[s].type != ColumnType::Real) continue;
      const double score = agg_probs[a] * sel_probs[s];
      if (score > best_score) {
        best_score = score;
        best = {agg, s};
      }
    }
  }
  return best;
}

Prediction Seq2SqlModel::predict(const Prepared& p) const {
  Graph g;
  Encoded enc = encode(g, p);
  const auto agg_p = softmax_values(agg_logits(g, enc).value());
  const auto sel_p = softmax_values(sel_logits(g, enc).value());
  const auto [agg, sel] = best_valid_head(agg_p, sel_p, p.table->header);
  auto d = decode_where(g, enc, p, DecodeMode::Greedy, config_.max_decode_len);
  return assemble_prediction(agg, sel, d.tokens, p.table->header);
}

// --- baseline ----------------------------------------------------------------------

struct BaselineModel::Step {
  std::vector<LstmState> states;
  Var kappa;   // 1 x 2h
  Var beta;    // 1 x T attention weights
  Var logits;  // 1 x |target|
};

BaselineModel::BaselineModel(const ModelConfig& config, Vocabulary vocab, Vocabulary target_vocab,
                             std::uint64_t seed)
    : Model(config, std::move(vocab)), target_vocab_(std::move(target_vocab)) {
  Rng rng(seed);
  const std::size_t h = config_.hidden, enc = 2 * h;
  encoder_ = make_encoder(params_, config_, vocab_.size(), rng);
  out_embeddings_ = Embeddings::create(params_, "dec.emb", target_vocab_.size(), config_.emb_dim, rng);
  Tensor start(1, config_.emb_dim);
  for (std::size_t i = 0; i < start.size(); ++i) start[i] = 0.1 * rng.normal();
  start_ = &params_.add("dec.start", std::move(start));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    layers_.push_back(LstmParams::create(params_, "dec.l" + std::to_string(l),
                                         l == 0 ? config_.emb_dim + enc : h, h, rng));
  }
  init_w_ = &params_.add("dec.init_w", ad::glorot(enc, config_.layers * h, rng));
  init_b_ = &params_.add("dec.init_b", Tensor(1, config_.layers * h));
  att_w_ = &params_.add("dec.att_w", ad::glorot(h, enc, rng));
  out_u_ = &params_.add("dec.out_u", ad::glorot(h + enc, target_vocab_.size(), rng));
  out_b_ = &params_.add("dec.out_b", Tensor(1, target_vocab_.size()));
}

json BaselineModel::metadata() const {
  json j = Model::metadata();
  j["target_vocab"] = target_vocab_.tokens();
  return j;
}

Prepared BaselineModel::prepare(const Example& e, const Table& t) const {
  Prepared p = Model::prepare(e, t);
  const auto stream = query_tokens(e.gold, t.header);
  p.target_ids = target_vocab_.ids(stream);
  return p;
}

BaselineModel::Step BaselineModel::step(Graph& g, Var h, Var h_t, const Step& prev, int prev_id) const {
  Step next;
  next.states = prev.states;
  Var y = prev_id < 0 ? g.param(*start_) : out_embeddings_.lookup(g, std::span<const int>(&prev_id, 1));
  Var top = run_layers(g, ad::concat({y, prev.kappa}, 1), next.states, layers_);
  Var scores = ad::matmul(ad::matmul(top, g.param(*att_w_)), h_t);
  next.beta = ad::softmax(scores, 1);
  next.kappa = ad::matmul(next.beta, h);
  next.logits = ad::add(ad::matmul(ad::concat({top, next.kappa}, 1), g.param(*out_u_)), g.param(*out_b_));
  return next;
}

LossParts BaselineModel::supervised_loss(Graph& g, const Prepared& p) const {
  LossParts parts;
  Var h = encoder_.encode(g, p.input, config_.dropout);
  Var h_t = ad::transpose(h);
  Step cur{initial_states(g, h, *init_w_, *init_b_, layers_.size(), config_.hidden), zeros(g, 1, h.cols()), {},
           {}};
  int prev = -1;
  std::vector<Var> losses;
  for (int id : p.target_ids) {
    cur = step(g, h, h_t, cur, prev);
    losses.push_back(ad::cross_entropy(cur.logits, static_cast<std::size_t>(id)));
    prev = id;
  }
  parts.whe = ad::sum(ad::concat(std::span<const Var>(losses), 1));
  parts.total = parts.whe;
  return parts;
}

std::vector<BaselineModel::Hypothesis> BaselineModel::beam_search(const Prepared& p, std::size_t width) const {
  if (width == 0) throw ConfigError("beam width must be positive");
  Graph g;
  Var h = encoder_.encode(g, p.input, 0.0);
  Var h_t = ad::transpose(h);
  const int end_id = target_vocab_.id(std::string(sqltok::kEnd));

  struct Beam {
    Step step;
    Hypothesis hyp;
  };
  std::vector<Beam> active;
  active.push_back({Step{initial_states(g, h, *init_w_, *init_b_, layers_.size(), config_.hidden),
                         zeros(g, 1, h.cols()), {}, {}},
                    {}});
  std::vector<Hypothesis> finished;

  for (std::size_t len = 0; len < config_.max_decode_len && !active.empty() && finished.size() < width; ++len) {
    struct Candidate {
      double score;
      std::size_t beam;
      int id;
    };
    std::vector<Candidate> cands;
    std::vector<Step> steps;
    for (std::size_t b = 0; b < active.size(); ++b) {
      const auto& hyp = active[b].hyp;
      steps.push_back(step(g, h, h_t, active[b].step, hyp.ids.empty() ? -1 : hyp.ids.back()));
      const auto probs = softmax_values(steps.back().logits.value());
      std::vector<int> order(probs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      const std::size_t keep = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](int a, int c) { return probs[a] > probs[c] || (probs[a] == probs[c] && a < c); });
      for (std::size_t k = 0; k < keep; ++k) {
        cands.push_back({hyp.score + std::log(probs[order[k]]), b, order[k]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.id < b.id;
    });
    std::vector<Beam> next;
    for (const auto& c : cands) {
      if (next.size() + finished.size() >= width) break;
      Beam nb{steps[c.beam], active[c.beam].hyp};
      nb.hyp.score = c.score;
      nb.hyp.ids.push_back(c.id);
      if (c.id == Vocabulary::kUnknownId) {
        nb.hyp.tokens.push_back(p.input.tokens[argmax(nb.step.beta.value().data())]);
      } else {
        nb.hyp.tokens.push_back(target_vocab_.token(c.id));
      }
      if (c.id == end_id) {
        finished.push_back(std::move(nb.hyp));
      } else {
        next.push_back(std::move(nb));
      }
    }
    active = std::move(next);
  }
  if (finished.empty()) {
    for (auto& b : active) finished.push_back(std::move(b.hyp));
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  return finished;
}

BaselineModel::Hypothesis BaselineModel::greedy(const Prepared& p) const {
  Graph g;
  Var h = encoder_.encode(g, p.input, 0.0);
  Var h_t = ad::transpose(h);
  const int end_id = target_vocab_.id(std::string(sqltok::kEnd));
  Step cur{initial_states(g, h, *init_w_, *init_b_, layers_.size(), config_.hidden), zeros(g, 1, h.cols()), {}, {}};
  Hypothesis hyp;
  for (std::size_t len = 0; len < config_.max_decode_len; ++len) {
    cur = step(g, h, h_t, cur, hyp.ids.empty() ? -1 : hyp.ids.back());
    const auto probs = softmax_values(cur.logits.value());
    const int id = static_cast<int>(argmax(probs));
    hyp.score += std::log(probs[static_cast<std::size_t>(id)]);
    hyp.ids.push_back(id);
    hyp.tokens.push_back(id == Vocabulary::kUnknownId ? p.input.tokens[argmax(cur.beta.value().data())]
                                                      : target_vocab_.token(id));
    if (id == end_id) break;
  }
  return hyp;
}

Prediction BaselineModel::predict(const Prepared& p) const {
  const auto hyps = beam_search(p, config_.beam);
  return assemble_stream_prediction(hyps.front().tokens, p.table->header);
}

}  // namespace nl2sql
