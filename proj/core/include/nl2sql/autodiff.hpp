#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nl2sql/rng.hpp"

// Minimal define-by-run reverse-mode automatic differentiation over dense
// row-major float64 tensors. A Graph is built per example and discarded.
//
// Tensors are rank 1 or 2; a rank-1 tensor of length n behaves as a 1 x n
// row. The only broadcast supported is adding a 1 x n bias row to every row
// of an m x n matrix.
namespace nl2sql::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double x) { return Tensor(1, 1, x); }
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double item() const;

  void fill(double x);
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A named learned weight with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad();
};

// Owns parameters in insertion order with stable addresses.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor value, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t num_scalars() const;

  // Copies values (not gradients) from another store with identical names
  // and shapes.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Xavier/Glorot-uniform initialisation.
Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng);

class Graph;

// Handle to a node in a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  explicit operator bool() const noexcept { return graph != nullptr; }
};

class Graph {
 public:
  // `training` enables dropout; masks are drawn from an Rng seeded here.
  explicit Graph(bool training = false, std::uint64_t seed = 0);

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const noexcept { return training_; }
  Rng& rng() noexcept { return rng_; }

  Var constant(Tensor value);
  // Leaf referencing a parameter (no copy). Gradients flow into p.grad when
  // p.trainable. Repeated calls with the same parameter return the same node.
  Var param(Parameter& p);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() w.r.t. an intermediate node (zeros if the
  // node received none).
  Tensor grad(Var v) const;

  // Accumulates d(loss)/d(p) into every reachable trainable parameter.
  // Intermediate gradients are reset first, so calling backward twice adds the
  // parameter gradients twice. Throws NonScalarLoss unless loss has one entry.
  void backward(Var loss);

  std::size_t num_nodes() const noexcept { return nodes_.size(); }

  // Op plumbing used by the free functions below.
  using BackwardFn = std::function<void(Graph&, int self)>;
  Var record(const char* op, Tensor value, std::initializer_list<int> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, std::vector<int> inputs, BackwardFn fn);
  const Tensor& val(int id) const;
  const Tensor& out_grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].requires_grad; }
  // Lazily allocated accumulator for node `id` (the parameter's own grad for
  // parameter leaves).
  Tensor& grad_acc(int id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  bool training_;
  Rng rng_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// --- Primitive ops ------------------------------------------------------------
// Each throws ShapeMismatch on incompatible shapes and NonFiniteValue when a
// forward value is NaN/Inf.

Var add(Var a, Var b);  // same shape, or b is a 1 x n bias added to every row
Var sub(Var a, Var b);  // same shape
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double k);
Var matmul(Var a, Var b);
Var transpose(Var a);
// axis 0 stacks rows, axis 1 joins columns.
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var slice_cols(Var a, std::size_t start, std::size_t len);
Var slice_rows(Var a, std::size_t start, std::size_t len);
inline Var row(Var a, std::size_t i) { return slice_rows(a, i, 1); }
Var tanh(Var a);
Var sigmoid(Var a);
// axis 1: each row sums to one; axis 0: each column sums to one.
Var softmax(Var a, int axis = 1);
// Rows of `table` selected by ids; id 0 is the reserved unknown token and
// always yields a zero row that receives no gradient.
Var embed(Var table, std::span<const int> ids);
// axis 0 -> 1 x n column sums, axis 1 -> m x 1 row sums, axis -1 -> 1 x 1.
Var sum(Var a, int axis = -1);
// -log(dist[index]) for a 1 x n probability row.
Var neg_log_prob(Var dist, std::size_t index);
// Fused -log softmax(logits)[index] for a 1 x n logit row.
Var cross_entropy(Var logits, std::size_t index);
// Inverted dropout: survivors scaled by 1/(1-p); identity when the graph is
// not in training mode or p == 0.
Var dropout(Var a, double p);

// --- Gradient checking ---------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares backward() gradients of `f` to central differences for every
// coordinate of `params`. Relative error is |a - n| / max(|a|, |n|, 1e-8).
// `f` must be deterministic (no dropout).
GradCheckResult grad_check(const std::function<Var(Graph&)>& f, std::span<Parameter* const> params,
                           double eps = 1e-5);

}  // namespace nl2sql::ad
