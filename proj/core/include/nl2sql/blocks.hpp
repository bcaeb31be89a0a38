#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nl2sql/autodiff.hpp"

namespace nl2sql {

// Token <-> id map. Id 0 is the reserved unknown token.
class Vocabulary {
 public:
  static constexpr int kUnknownId = 0;
  static constexpr std::string_view kUnknown = "<unk>";

  Vocabulary();

  int add(const std::string& token);
  int id(const std::string& token) const;  // kUnknownId when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<int> ids(std::span<const std::string> tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// |V| x d embedding table. Row 0 stays the zero vector.
struct Embeddings {
  ad::Parameter* table = nullptr;
  std::size_t dim = 0;

  static Embeddings create(ad::ParamStore& store, const std::string& name, std::size_t vocab_size,
                           std::size_t dim, Rng& rng);

  // Initialises rows from a plain-text file ("token v1 ... vd" per line) and
  // freezes the table. Returns how many vocabulary tokens were found.
  std::size_t load_vectors(const std::filesystem::path& path, const Vocabulary& vocab);

  ad::Var lookup(ad::Graph& g, std::span<const int> ids) const;
};

// Input-to-hidden (in x 4h), hidden-to-hidden (h x 4h) and bias (1 x 4h)
// for gates in the order input, forget, cell, output.
struct LstmParams {
  ad::Parameter* wx = nullptr;
  ad::Parameter* wh = nullptr;
  ad::Parameter* bias = nullptr;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;

  // Glorot weights, zero bias except the forget gate, which starts at 1.
  static LstmParams create(ad::ParamStore& store, const std::string& prefix, std::size_t input_size,
                           std::size_t hidden_size, Rng& rng);
};

struct LstmState {
  ad::Var h;
  ad::Var c;
};

LstmState zero_state(ad::Graph& g, std::size_t hidden_size);

// One step of the standard LSTM. x is 1 x input_size.
LstmState lstm_cell(ad::Graph& g, ad::Var x, const LstmState& prev, const LstmParams& p);

// Runs an LSTM over the rows of xs (T x input_size). Returns the T x hidden
// matrix of states in input order; with `reverse` the recurrence runs from the
// last row to the first. `final` receives the state after the last step.
ad::Var lstm_sequence(ad::Graph& g, ad::Var xs, const LstmParams& p, bool reverse = false,
                      LstmState* final = nullptr, const LstmState* init = nullptr);

struct BiLstmLayer {
  LstmParams forward;
  LstmParams backward;
};

struct BiLstmParams {
  std::vector<BiLstmLayer> layers;
  std::size_t hidden_size = 0;  // per direction

  static BiLstmParams create(ad::ParamStore& store, const std::string& prefix, std::size_t input_size,
                             std::size_t hidden_size, std::size_t num_layers, Rng& rng);
  std::size_t output_size() const { return 2 * hidden_size; }
};

// Stacked bidirectional encoder: each layer concatenates its forward and
// backward states (T x 2h) and is followed by dropout. Throws EmptySequence.
ad::Var bilstm_encode(ad::Graph& g, ad::Var xs, const BiLstmParams& p, double dropout_p);

// Final hidden state (1 x hidden) of a unidirectional LSTM run over a column
// name's embedded tokens. Throws EmptySequence.
ad::Var column_encode(ad::Graph& g, ad::Var name_embeddings, const LstmParams& p);

struct AttentionPool {
  ad::Var context;  // 1 x D, sum_t weights_t * h_t
  ad::Var weights;  // 1 x T, softmax of h_t . w
};

// Scores each row of h (T x D) with w (D x 1), normalises with softmax and
// returns the weighted sum of rows.
AttentionPool attention_pool(ad::Graph& g, ad::Var h, ad::Var w);

// Pointer scores over input positions: score_t = w . tanh(U g_s + V h_t).
// g_s is 1 x G, h is T x D, w is A x 1, u is G x A, v is D x A; returns 1 x T.
ad::Var pointer_scores(ad::Graph& g, ad::Var gs, ad::Var h, ad::Var w, ad::Var u, ad::Var v);
// Same, with the T x A projection h * v precomputed once per sequence.
ad::Var pointer_scores_projected(ad::Graph& g, ad::Var gs, ad::Var hv, ad::Var w, ad::Var u);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> xs);

}  // namespace nl2sql
