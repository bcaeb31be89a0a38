#include "nl2sql/blocks.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "nl2sql/error.hpp"

namespace nl2sql {

using ad::Graph;
using ad::Tensor;
using ad::Var;

Vocabulary::Vocabulary() { add(std::string(kUnknown)); }

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknownId : it->second;
}

std::vector<int> Vocabulary::ids(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Embeddings Embeddings::create(ad::ParamStore& store, const std::string& name, std::size_t vocab_size,
                              std::size_t dim, Rng& rng) {
  Tensor t(vocab_size, dim);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t r = 1; r < vocab_size; ++r) {
    for (std::size_t c = 0; c < dim; ++c) t(r, c) = s * rng.normal();
  }
  Embeddings e;
  e.table = &store.add(name, std::move(t));
  e.dim = dim;
  return e;
}

std::size_t Embeddings::load_vectors(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file '" + path.string() + "'");
  std::string line;
  std::size_t found = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (v.size() != dim) {
      throw FormatError("embedding for '" + token + "' has " + std::to_string(v.size()) +
                            " values, expected " + std::to_string(dim),
                        line_no);
    }
    const int id = vocab.id(token);
    if (id == Vocabulary::kUnknownId) continue;
    for (std::size_t c = 0; c < dim; ++c) table->value(static_cast<std::size_t>(id), c) = v[c];
    ++found;
  }
  table->trainable = false;
  return found;
}

Var Embeddings::lookup(Graph& g, std::span<const int> ids) const {
  return ad::embed(g.param(*table), ids);
}

LstmParams LstmParams::create(ad::ParamStore& store, const std::string& prefix, std::size_t input_size,
                              std::size_t hidden_size, Rng& rng) {
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.wx = &store.add(prefix + ".wx", ad::glorot(input_size, 4 * hidden_size, rng));
  p.wh = &store.add(prefix + ".wh", ad::glorot(hidden_size, 4 * hidden_size, rng));
  Tensor b(1, 4 * hidden_size);
  for (std::size_t i = hidden_size; i < 2 * hidden_size; ++i) b[i] = 1.0;
  p.bias = &store.add(prefix + ".b", std::move(b));
  return p;
}

LstmState zero_state(Graph& g, std::size_t hidden_size) {
  return {g.constant(Tensor(1, hidden_size)), g.constant(Tensor(1, hidden_size))};
}

namespace {

LstmState gates_to_state(Var z, const LstmState& prev, std::size_t h) {
  Var i = ad::sigmoid(ad::slice_cols(z, 0, h));
  Var f = ad::sigmoid(ad::slice_cols(z, h, h));
  Var cand = ad::tanh(ad::slice_cols(z, 2 * h, h));
  Var o = ad::sigmoid(ad::slice_cols(z, 3 * h, h));
  Var c = ad::add(ad::mul(f, prev.c), ad::mul(i, cand));
  Var hs = ad::mul(o, ad::tanh(c));
  return {hs, c};
}

}  // namespace

LstmState lstm_cell(Graph& g, Var x, const LstmState& prev, const LstmParams& p) {
  if (x.cols() != p.input_size || prev.h.cols() != p.hidden_size || prev.c.cols() != p.hidden_size) {
    throw ShapeMismatch("lstm_cell: input or state does not match parameters");
  }
  Var z = ad::add(ad::add(ad::matmul(x, g.param(*p.wx)), ad::matmul(prev.h, g.param(*p.wh))),
                  g.param(*p.bias));
  return gates_to_state(z, prev, p.hidden_size);
}

Var lstm_sequence(Graph& g, Var xs, const LstmParams& p, bool reverse, LstmState* final,
                  const LstmState* init) {
  const std::size_t steps = xs ? xs.rows() : 0;
  if (steps == 0) throw EmptySequence("lstm over an empty sequence");
  if (xs.cols() != p.input_size) throw ShapeMismatch("lstm_sequence: input width mismatch");
  // Input projections for all steps in one product.
  Var projected = ad::add(ad::matmul(xs, g.param(*p.wx)), g.param(*p.bias));
  Var wh = g.param(*p.wh);
  LstmState state = init ? *init : zero_state(g, p.hidden_size);
  std::vector<Var> outputs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    Var z = ad::add(ad::row(projected, t), ad::matmul(state.h, wh));
    state = gates_to_state(z, state, p.hidden_size);
    outputs[t] = state.h;
  }
  if (final) *final = state;
  return steps == 1 ? outputs[0] : ad::concat(std::span<const Var>(outputs), 0);
}

BiLstmParams BiLstmParams::create(ad::ParamStore& store, const std::string& prefix, std::size_t input_size,
                                  std::size_t hidden_size, std::size_t num_layers, Rng& rng) {
  BiLstmParams p;
  p.hidden_size = hidden_size;
  std::size_t in = input_size;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    BiLstmLayer layer;
    layer.forward = LstmParams::create(store, base + ".fwd", in, hidden_size, rng);
    layer.backward = LstmParams::create(store, base + ".bwd", in, hidden_size, rng);
    p.layers.push_back(layer);
    in = 2 * hidden_size;
  }
  return p;
}

Var bilstm_encode(Graph& g, Var xs, const BiLstmParams& p, double dropout_p) {
  if (!xs || xs.rows() == 0) throw EmptySequence("bilstm_encode: empty sequence");
  Var layer_in = xs;
  for (const auto& layer : p.layers) {
    Var fwd = lstm_sequence(g, layer_in, layer.forward, false);
    Var bwd = lstm_sequence(g, layer_in, layer.backward, true);
    layer_in = ad::dropout(ad::concat({fwd, bwd}, 1), dropout_p);
  }
  return layer_in;
}

Var column_encode(Graph& g, Var name_embeddings, const LstmParams& p) {
  if (!name_embeddings || name_embeddings.rows() == 0) throw EmptySequence("column_encode: empty column name");
  LstmState final;
  lstm_sequence(g, name_embeddings, p, false, &final);
  return final.h;
}

AttentionPool attention_pool(Graph& g, Var h, Var w) {
  if (!h || h.rows() == 0) throw EmptySequence("attention_pool: empty sequence");
  (void)g;
  Var scores = ad::transpose(ad::matmul(h, w));  // 1 x T
  Var weights = ad::softmax(scores, 1);
  Var context = ad::matmul(weights, h);  // 1 x D
  return {context, weights};
}

Var pointer_scores_projected(Graph& g, Var gs, Var hv, Var w, Var u) {
  (void)g;
  Var act = ad::tanh(ad::add(hv, ad::matmul(gs, u)));  // T x A
  return ad::transpose(ad::matmul(act, w));             // 1 x T
}

Var pointer_scores(Graph& g, Var gs, Var h, Var w, Var u, Var v) {
  return pointer_scores_projected(g, gs, ad::matmul(h, v), w, u);
}

std::size_t argmax(std::span<const double> xs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) best = i;
  }
  return best;
}

}  // namespace nl2sql
