#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nl2sql/autodiff.hpp"
#include "nl2sql/blocks.hpp"
#include "nl2sql/datagen.hpp"
#include "nl2sql/sql.hpp"
#include "nl2sql/table.hpp"
#include "nl2sql/tokenize.hpp"

namespace nl2sql {

// --- Input layout ----------------------------------------------------------------

inline constexpr std::string_view kColumnSentinel = "<col>";
inline constexpr std::string_view kSqlSentinel = "<sql>";
inline constexpr std::string_view kQuestionSentinel = "<question>";

enum class Segment { Sentinel, Column, Sql, Question };

// <col> column tokens... <sql> SQL vocabulary <question> question tokens
struct InputSequence {
  std::vector<std::string> tokens;
  std::vector<int> ids;
  std::vector<Segment> segments;
  std::vector<std::pair<std::size_t, std::size_t>> column_spans;  // [begin, end)
  std::size_t sql_begin = 0;
  std::size_t question_begin = 0;
  // Original surface form of every position (sentinels and SQL tokens map to
  // themselves).
  std::vector<std::string> glosses;

  std::size_t size() const noexcept { return tokens.size(); }
  std::size_t sql_position(std::string_view keyword) const;  // throws StructureError
  std::size_t end_position() const { return sql_position(sqltok::kEnd); }
  const std::string& gloss_of(std::size_t position) const { return glosses.at(position); }
};

// Throws EmptyInput for an empty schema or question.
InputSequence build_input_sequence(const Schema& schema, std::span<const Token> question,
                                   const Vocabulary& vocab);
InputSequence build_input_sequence(const Schema& schema, std::string_view question,
                                   const Vocabulary& vocab);

// Positions an oracle pointer decoder would emit for where_tokens(q) (or
// query_tokens(q) when `full_query`): keywords point into the SQL segment,
// column tokens into their column's span, and value tokens into their first
// contiguous occurrence in the question, falling back to the first occurrence
// of each token anywhere. nullopt if some value token is not in the input.
std::optional<std::vector<std::size_t>> pointer_targets(const Query& q, const InputSequence& input,
                                                        bool full_query);

// Sentinels, SQL vocabulary, then every column and question token of the
// examples in first-seen order.
Vocabulary build_vocabulary(std::span<const Example> examples, const Dataset& d);

// Closed output vocabulary of the sequence-to-sequence baseline: SQL
// vocabulary plus the most frequent column/question tokens (ties by token),
// capped at `max_size` entries including the unknown token.
Vocabulary build_target_vocabulary(std::span<const Example> examples, const Dataset& d,
                                   std::size_t max_size = 10000);

// --- Configuration -----------------------------------------------------------------

enum class ModelKind { AugPtr, Seq2Sql, Baseline };
std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);  // throws ConfigError

struct ModelConfig {
  ModelKind kind = ModelKind::Seq2Sql;
  std::size_t emb_dim = 32;
  std::size_t hidden = 32;  // per direction in the encoder; decoder size
  std::size_t layers = 2;
  double dropout = 0.3;
  std::size_t max_decode_len = 64;
  std::size_t beam = 5;
  // Pointer decoders also feed the encoder state of the previously pointed
  // position, so unknown-word positions stay distinguishable.
  bool feed_pointed_state = true;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// --- Predictions -------------------------------------------------------------------

struct Prediction {
  AggOp agg = AggOp::None;
  std::size_t sel = 0;
  std::vector<std::string> tokens;  // WHERE stream (seq2sql) or whole query stream
  std::optional<Query> query;       // empty when the stream failed to assemble
  std::string error;                // StructureError message when query is empty

  bool valid() const noexcept { return query.has_value(); }
};

// Parses the WHERE stream and combines it with the classifier outputs; a
// malformed stream yields a Prediction without a query.
Prediction assemble_prediction(AggOp agg, std::size_t sel, std::span<const std::string> where_tokens,
                               const Schema& schema);
// Same for a whole-query stream.
Prediction assemble_stream_prediction(std::span<const std::string> tokens, const Schema& schema);

// {"table_id", "pred": query JSON or {"error": "structure"}, "gold": query JSON}
nlohmann::json prediction_to_json(const Prediction& p, const Example& e);

// --- Models ------------------------------------------------------------------------

// One example ready for a model: its input layout and supervision targets.
struct Prepared {
  const Example* example = nullptr;
  const Table* table = nullptr;
  InputSequence input;
  std::optional<std::vector<std::size_t>> targets;  // pointer positions
  std::vector<int> target_ids;                      // baseline output ids
};

// Loss terms of one example. agg/sel are empty for sequence-only models.
struct LossParts {
  ad::Var agg;
  ad::Var sel;
  ad::Var whe;
  ad::Var total;
};

enum class DecodeMode { Greedy, Sample };

struct PointerDecode {
  std::vector<std::size_t> positions;
  std::vector<std::string> tokens;
  std::vector<ad::Var> log_probs;  // one per emitted token
};

class Model {
 public:
  virtual ~Model() = default;

  ModelKind kind() const noexcept { return config_.kind; }
  const ModelConfig& config() const noexcept { return config_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  ad::ParamStore& params() noexcept { return params_; }
  const ad::ParamStore& params() const noexcept { return params_; }

  virtual Prepared prepare(const Example& e, const Table& t) const;
  // Teacher-forced loss. Examples without pointer targets contribute only
  // their classifier terms (or nothing).
  virtual LossParts supervised_loss(ad::Graph& g, const Prepared& p) const = 0;
  // Deterministic prediction: greedy for pointer models, beam for the baseline.
  virtual Prediction predict(const Prepared& p) const = 0;

  // Vocabularies and config, enough to rebuild an identically shaped model.
  virtual nlohmann::json metadata() const;

  static std::unique_ptr<Model> create(const ModelConfig& config, Vocabulary vocab,
                                       Vocabulary target_vocab, std::uint64_t seed);
  static std::unique_ptr<Model> from_metadata(const nlohmann::json& meta);

 protected:
  Model(const ModelConfig& config, Vocabulary vocab) : config_(config), vocab_(std::move(vocab)) {}

  ModelConfig config_;
  Vocabulary vocab_;
  ad::ParamStore params_;
};

// Shared embedding + stacked biLSTM encoder.
struct Encoder {
  Embeddings embeddings;
  BiLstmParams lstm;

  ad::Var encode(ad::Graph& g, const InputSequence& in, double dropout) const;
};

// Uni-directional multi-layer LSTM decoder that points into the input.
struct PointerDecoder {
  std::vector<LstmParams> layers;
  ad::Parameter* start = nullptr;  // 1 x emb_dim
  ad::Parameter* init_w = nullptr;  // 2h x (layers * hidden)
  ad::Parameter* init_b = nullptr;
  ad::Parameter* w_ptr = nullptr;  // attn x 1
  ad::Parameter* u_ptr = nullptr;  // hidden x attn
  ad::Parameter* v_ptr = nullptr;  // 2h x attn
  bool feed_pointed_state = true;
};

// Augmented pointer network: decodes the whole query by pointing.
class AugPtrModel : public Model {
 public:
  AugPtrModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed);

  Prepared prepare(const Example& e, const Table& t) const override;
  LossParts supervised_loss(ad::Graph& g, const Prepared& p) const override;
  Prediction predict(const Prepared& p) const override;

  PointerDecode decode(ad::Graph& g, const Prepared& p, DecodeMode mode, std::size_t max_len) const;

 private:
  Encoder encoder_;
  PointerDecoder decoder_;
};

// Aggregation classifier, column selector and pointer WHERE decoder over a
// shared encoder.
class Seq2SqlModel : public Model {
 public:
  Seq2SqlModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed);

  struct Encoded {
    ad::Var h;        // T x 2h top encoder layer
    ad::Var columns;  // N x h column encodings
  };

  Prepared prepare(const Example& e, const Table& t) const override;
  LossParts supervised_loss(ad::Graph& g, const Prepared& p) const override;
  Prediction predict(const Prepared& p) const override;

  Encoded encode(ad::Graph& g, const Prepared& p) const;
  ad::Var agg_logits(ad::Graph& g, const Encoded& enc) const;  // 1 x 4
  ad::Var sel_logits(ad::Graph& g, const Encoded& enc) const;  // 1 x N
  ad::Var where_loss(ad::Graph& g, const Encoded& enc, const Prepared& p) const;
  PointerDecode decode_where(ad::Graph& g, const Encoded& enc, const Prepared& p, DecodeMode mode,
                             std::size_t max_len) const;

  // Most probable (agg, sel) pair that forms a valid query for the schema:
  // MIN/MAX are only paired with real columns.
  static std::pair<AggOp, std::size_t> best_valid_head(std::span<const double> agg_probs,
                                                       std::span<const double> sel_probs,
                                                       const Schema& schema);

 private:
  Encoder encoder_;
  LstmParams column_lstm_;
  // Aggregation head.
  ad::Parameter* agg_inp_ = nullptr;  // 2h x 1
  ad::Parameter* agg_v_ = nullptr;    // 2h x h
  ad::Parameter* agg_b_ = nullptr;    // 1 x h
  ad::Parameter* agg_w_ = nullptr;    // h x 4
  ad::Parameter* agg_c_ = nullptr;    // 1 x 4
  // Selection head, untied from the aggregation head.
  ad::Parameter* sel_inp_ = nullptr;  // 2h x 1
  ad::Parameter* sel_v_ = nullptr;    // 2h x h
  ad::Parameter* sel_vc_ = nullptr;   // h x h
  ad::Parameter* sel_w_ = nullptr;    // h x 1
  PointerDecoder decoder_;
};

// Attentional sequence-to-sequence baseline with input feeding and a closed
// output vocabulary.
class BaselineModel : public Model {
 public:
  BaselineModel(const ModelConfig& config, Vocabulary vocab, Vocabulary target_vocab, std::uint64_t seed);

  struct Hypothesis {
    std::vector<std::string> tokens;  // after unknown-word replacement
    std::vector<int> ids;             // raw output ids
    double score = 0.0;               // sum of log-probabilities
  };

  Prepared prepare(const Example& e, const Table& t) const override;
  LossParts supervised_loss(ad::Graph& g, const Prepared& p) const override;
  Prediction predict(const Prepared& p) const override;
  nlohmann::json metadata() const override;

  const Vocabulary& target_vocab() const noexcept { return target_vocab_; }

  // k-best list sorted by descending score. Emitted unknown tokens are
  // replaced by the input token with the highest attention weight.
  std::vector<Hypothesis> beam_search(const Prepared& p, std::size_t width) const;
  Hypothesis greedy(const Prepared& p) const;

 private:
  struct Step;
  Step step(ad::Graph& g, ad::Var h, ad::Var h_t, const Step& prev, int prev_id) const;

  Vocabulary target_vocab_;
  Encoder encoder_;
  Embeddings out_embeddings_;
  ad::Parameter* start_ = nullptr;  // 1 x emb_dim
  std::vector<LstmParams> layers_;
  ad::Parameter* init_w_ = nullptr;
  ad::Parameter* init_b_ = nullptr;
  ad::Parameter* att_w_ = nullptr;  // hidden x 2h
  ad::Parameter* out_u_ = nullptr;  // (hidden + 2h) x |target|
  ad::Parameter* out_b_ = nullptr;
};

}  // namespace nl2sql
