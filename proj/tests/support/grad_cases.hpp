#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nl2sql/autodiff.hpp"
#include "nl2sql/rng.hpp"

namespace nl2sql::fx {

inline ad::Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  ad::Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.uniform(-1.0, 1.0);
  return t;
}

// Weighted sum against a fixed random matrix so every output entry matters.
inline ad::Var probe(ad::Graph& g, ad::Var v, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::mul(v, g.constant(random_tensor(v.rows(), v.cols(), rng))));
}

struct GradCase {
  std::string name;
  std::function<ad::Var(ad::Graph&)> loss;
};

// One scalar loss per primitive over random shapes drawn from `seed`. The
// parameters live in `store`; `params` lists all of them for grad_check.
struct PrimitiveGradSet {
  ad::ParamStore store;
  std::vector<ad::Parameter*> params;
  std::vector<GradCase> cases;
};

inline void fill_primitive_grad_set(PrimitiveGradSet& set, std::uint64_t seed) {
  using namespace nl2sql::ad;
  Rng rng(seed);
  const std::size_t m = 1 + rng.index(4), n = 1 + rng.index(4), k = 1 + rng.index(4);
  Parameter& a = set.store.add("a", random_tensor(m, n, rng));
  Parameter& b = set.store.add("b", random_tensor(m, n, rng));
  Parameter& c = set.store.add("c", random_tensor(n, k, rng));
  Parameter& bias = set.store.add("bias", random_tensor(1, n, rng));
  Parameter& emb = set.store.add("emb", random_tensor(5, n, rng));
  set.params = {&a, &b, &c, &bias, &emb};
  Parameter* pa = &a;
  Parameter* pb = &b;
  Parameter* pc = &c;
  Parameter* pbias = &bias;
  Parameter* pemb = &emb;
  set.cases = {
      {"add", [=](Graph& g) { return probe(g, add(g.param(*pa), g.param(*pb)), 1); }},
      {"add_bias", [=](Graph& g) { return probe(g, add(g.param(*pa), g.param(*pbias)), 2); }},
      {"sub", [=](Graph& g) { return probe(g, sub(g.param(*pa), g.param(*pb)), 3); }},
      {"mul", [=](Graph& g) { return probe(g, mul(g.param(*pa), g.param(*pb)), 4); }},
      {"scale", [=](Graph& g) { return probe(g, scale(g.param(*pa), -1.7), 5); }},
      {"matmul", [=](Graph& g) { return probe(g, matmul(g.param(*pa), g.param(*pc)), 6); }},
      {"transpose", [=](Graph& g) { return probe(g, transpose(g.param(*pa)), 7); }},
      {"concat0", [=](Graph& g) { return probe(g, concat({g.param(*pa), g.param(*pb)}, 0), 8); }},
      {"concat1", [=](Graph& g) { return probe(g, concat({g.param(*pa), g.param(*pb)}, 1), 9); }},
      {"slice_cols", [=](Graph& g) { return probe(g, slice_cols(g.param(*pa), 0, n), 10); }},
      {"slice_rows", [=](Graph& g) { return probe(g, slice_rows(g.param(*pa), m - 1, 1), 11); }},
      {"tanh", [=](Graph& g) { return probe(g, tanh(g.param(*pa)), 12); }},
      {"sigmoid", [=](Graph& g) { return probe(g, sigmoid(g.param(*pa)), 13); }},
      {"softmax1", [=](Graph& g) { return probe(g, softmax(g.param(*pa), 1), 14); }},
      {"softmax0", [=](Graph& g) { return probe(g, softmax(g.param(*pa), 0), 15); }},
      {"embed",
       [=](Graph& g) {
         const std::vector<int> ids = {1, 3, 0, 3};
         return probe(g, embed(g.param(*pemb), ids), 16);
       }},
      {"sum0", [=](Graph& g) { return probe(g, sum(g.param(*pa), 0), 17); }},
      {"sum1", [=](Graph& g) { return probe(g, sum(g.param(*pa), 1), 18); }},
      {"neg_log_prob", [=](Graph& g) { return neg_log_prob(softmax(slice_rows(g.param(*pa), 0, 1)), n - 1); }},
      {"cross_entropy", [=](Graph& g) { return cross_entropy(slice_rows(g.param(*pb), 0, 1), 0); }},
      {"composite",
       [=](Graph& g) {
         const Var h1 = tanh(add(matmul(g.param(*pa), g.param(*pc)), g.constant(Tensor(1, k, 0.1))));
         const Var h2 = sigmoid(matmul(h1, transpose(g.param(*pc))));
         const Var h3 = softmax(mul(h2, g.param(*pb)));
         return probe(g, h3, 19);
       }},
  };
}

}  // namespace nl2sql::fx
