#include "nl2sql/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nl2sql/error.hpp"

namespace nl2sql::ad {

// --- Tensor ----------------------------------------------------------------------

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) throw ShapeMismatch("tensors must be rank 1 or 2");
  for (auto d : shape_) {
    if (d == 0) throw ShapeMismatch("tensor dimensions must be positive");
  }
  rows_ = shape_.size() == 1 ? 1 : shape_[0];
  cols_ = shape_.back();
  if (rows_ * cols_ != data_.size()) throw ShapeMismatch("data length does not match shape");
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_string());
  return data_[0];
}

void Tensor::fill(double x) { std::fill(data_.begin(), data_.end(), x); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

// --- Parameters ----------------------------------------------------------------

void Parameter::zero_grad() {
  if (grad.same_shape(value) && !grad.empty()) {
    grad.fill(0.0);
  } else {
    grad = Tensor(value.shape(), std::vector<double>(value.size(), 0.0));
  }
}

Parameter& ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(value);
  p->trainable = trainable;
  p->zero_grad();
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.size() != size()) throw ConfigError("parameter stores differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.get(params_[i]->name);
    if (!src.value.same_shape(params_[i]->value)) {
      throw ShapeMismatch("parameter '" + src.name + "' has a different shape");
    }
    params_[i]->value = src.value;
  }
}

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (auto& x : t.data()) x = rng.uniform(-limit, limit);
  return t;
}

// --- Graph ---------------------------------------------------------------------

const Tensor& Var::value() const { return graph->value(*this); }

Graph::Graph(bool training, std::uint64_t seed) : training_(training), rng_(seed) {
  nodes_.reserve(256);
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NonFiniteValue("constant contains a non-finite value");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_[&p] = id;
  return {this, id};
}

const Tensor& Graph::val(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.param ? n.param->value : n.value;
}

const Tensor& Graph::value(Var v) const { return val(v.id); }

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.param) return n.param->grad;
  if (n.grad.empty()) return Tensor(val(v.id).rows(), val(v.id).cols());
  return n.grad;
}

Tensor& Graph::grad_acc(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  Tensor& g = n.param ? n.param->grad : n.grad;
  const Tensor& v = val(id);
  if (g.empty() || !g.same_shape(v)) g = Tensor(v.rows(), v.cols());
  return g;
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<int> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::vector<int>(inputs), std::move(fn));
}

Var Graph::record(const char* op, Tensor value, std::vector<int> inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NonFiniteValue(std::string("non-finite value produced by ") + op + " " +
                         value.shape_string());
  }
  Node n;
  n.value = std::move(value);
  for (int i : inputs) {
    if (nodes_[static_cast<std::size_t>(i)].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ShapeMismatch("loss belongs to a different graph");
  if (val(loss.id).size() != 1) {
    throw NonScalarLoss("backward() needs a scalar loss, got " + val(loss.id).shape_string());
  }
  for (auto& n : nodes_) {
    if (!n.param) n.grad = Tensor();
  }
  grad_acc(loss.id)[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

// --- Ops -----------------------------------------------------------------------

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.shape_string() + " vs " + b.shape_string();
}

Graph& graph_of(Var a, Var b) {
  require(a.graph && a.graph == b.graph, "operands belong to different graphs");
  return *a.graph;
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = g.val(a.id);
  const Tensor& y = g.val(b.id);
  if (x.same_shape(y)) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    return g.record("add", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, int self) {
      const Tensor& go = g.out_grad(self);
      for (int in : {a, b}) {
        if (!g.needs_grad(in)) continue;
        Tensor& gi = g.grad_acc(in);
        for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
      }
    });
  }
  require(y.rows() == 1 && y.cols() == x.cols(), "add: " + shapes(x, y));
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += y(0, c);
  }
  return g.record("add_bias", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad_acc(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_acc(b);
      for (std::size_t r = 0; r < go.rows(); ++r) {
        for (std::size_t c = 0; c < go.cols(); ++c) gb(0, c) += go(r, c);
      }
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = g.val(a.id);
  const Tensor& y = g.val(b.id);
  require(x.same_shape(y), "sub: " + shapes(x, y));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return g.record("sub", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad_acc(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_acc(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = g.val(a.id);
  const Tensor& y = g.val(b.id);
  require(x.same_shape(y), "mul: " + shapes(x, y));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return g.record("mul", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    if (g.needs_grad(a)) {
      const Tensor& y = g.val(b);
      Tensor& ga = g.grad_acc(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
    }
    if (g.needs_grad(b)) {
      const Tensor& x = g.val(a);
      Tensor& gb = g.grad_acc(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * x[i];
    }
  });
}

Var scale(Var a, double k) {
  Graph& g = *a.graph;
  Tensor out = g.val(a.id);
  for (auto& x : out.data()) x *= k;
  return g.record("scale", std::move(out), {a.id}, [a = a.id, k](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& ga = g.grad_acc(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += k * go[i];
  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = g.val(a.id);
  const Tensor& y = g.val(b.id);
  require(x.cols() == y.rows(), "matmul: " + shapes(x, y));
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out(m, n);
  const double* xp = x.data().data();
  const double* yp = y.data().data();
  double* op = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = op + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = xp[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = yp + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yrow[j];
    }
  }
  return g.record("matmul", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& x = g.val(a);
    const Tensor& y = g.val(b);
    const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
    const double* gp = go.data().data();
    if (g.needs_grad(a)) {
      // dX = dOut * Y^T
      double* gx = g.grad_acc(a).data().data();
      const double* yp = y.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* yrow = yp + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * yrow[j];
          gx[i * k + p] += acc;
        }
      }
    }
    if (g.needs_grad(b)) {
      // dY = X^T * dOut
      double* gy = g.grad_acc(b).data().data();
      const double* xp = x.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = xp[i * k + p];
          if (xv == 0.0) continue;
          double* gyrow = gy + p * n;
          for (std::size_t j = 0; j < n; ++j) gyrow[j] += xv * grow[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph;
  const Tensor& x = g.val(a.id);
  Tensor out(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
  }
  return g.record("transpose", std::move(out), {a.id}, [a = a.id](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& ga = g.grad_acc(a);
    for (std::size_t r = 0; r < ga.rows(); ++r) {
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += go(c, r);
    }
  });
}

Var concat(std::span<const Var> parts, int axis) {
  require(!parts.empty(), "concat of nothing");
  require(axis == 0 || axis == 1, "concat axis must be 0 or 1");
  Graph& g = *parts[0].graph;
  std::vector<int> ids;
  std::size_t rows = 0, cols = 0;
  for (const Var& v : parts) {
    require(v.graph == &g, "concat operands belong to different graphs");
    const Tensor& t = g.val(v.id);
    if (axis == 0) {
      require(ids.empty() || t.cols() == cols, "concat(0): column counts differ");
      cols = t.cols();
      rows += t.rows();
    } else {
      require(ids.empty() || t.rows() == rows, "concat(1): row counts differ");
      rows = t.rows();
      cols += t.cols();
    }
    ids.push_back(v.id);
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (int id : ids) {
    const Tensor& t = g.val(id);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        if (axis == 0) {
          out(offset + r, c) = t(r, c);
        } else {
          out(r, offset + c) = t(r, c);
        }
      }
    }
    offset += axis == 0 ? t.rows() : t.cols();
  }
  std::vector<int> inputs = ids;
  return g.record("concat", std::move(out), std::move(inputs),
                  [ids = std::move(ids), axis](Graph& g, int self) {
                    const Tensor& go = g.out_grad(self);
                    std::size_t offset = 0;
                    for (int id : ids) {
                      const Tensor& t = g.val(id);
                      if (g.needs_grad(id)) {
                        Tensor& gi = g.grad_acc(id);
                        for (std::size_t r = 0; r < t.rows(); ++r) {
                          for (std::size_t c = 0; c < t.cols(); ++c) {
                            gi(r, c) += axis == 0 ? go(offset + r, c) : go(r, offset + c);
                          }
                        }
                      }
                      offset += axis == 0 ? t.rows() : t.cols();
                    }
                  });
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  Graph& g = *a.graph;
  const Tensor& x = g.val(a.id);
  require(len > 0 && start + len <= x.cols(), "slice_cols out of range on " + x.shape_string());
  Tensor out(x.rows(), len);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < len; ++c) out(r, c) = x(r, start + c);
  }
  return g.record("slice_cols", std::move(out), {a.id}, [a = a.id, start](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& ga = g.grad_acc(a);
    for (std::size_t r = 0; r < go.rows(); ++r) {
      for (std::size_t c = 0; c < go.cols(); ++c) ga(r, start + c) += go(r, c);
    }
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t len) {
  Graph& g = *a.graph;
  const Tensor& x = g.val(a.id);
  require(len > 0 && start + len <= x.rows(), "slice_rows out of range on " + x.shape_string());
  Tensor out(len, x.cols());
  std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(start * x.cols()), len * x.cols(),
              out.data().begin());
  return g.record("slice_rows", std::move(out), {a.id}, [a = a.id, start](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& ga = g.grad_acc(a);
    const std::size_t base = start * go.cols();
    for (std::size_t i = 0; i < go.size(); ++i) ga[base + i] += go[i];
  });
}

Var tanh(Var a) {
  Graph& g = *a.graph;
  Tensor out = g.val(a.id);
  for (auto& x : out.data()) x = std::tanh(x);
  return g.record("tanh", std::move(out), {a.id}, [a = a.id](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& y = g.val(self);
    Tensor& ga = g.grad_acc(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph;
  Tensor out = g.val(a.id);
  for (auto& x : out.data()) x = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return g.record("sigmoid", std::move(out), {a.id}, [a = a.id](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& y = g.val(self);
    Tensor& ga = g.grad_acc(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax(Var a, int axis) {
  require(axis == 0 || axis == 1, "softmax axis must be 0 or 1");
  Graph& g = *a.graph;
  const Tensor& x = g.val(a.id);
  Tensor out(x.rows(), x.cols());
  const std::size_t groups = axis == 1 ? x.rows() : x.cols();
  const std::size_t len = axis == 1 ? x.cols() : x.rows();
  auto at = [axis](std::size_t grp, std::size_t i) {
    return axis == 1 ? std::make_pair(grp, i) : std::make_pair(i, grp);
  };
  for (std::size_t grp = 0; grp < groups; ++grp) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < len; ++i) {
      auto [r, c] = at(grp, i);
      mx = std::max(mx, x(r, c));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      auto [r, c] = at(grp, i);
      out(r, c) = std::exp(x(r, c) - mx);
      total += out(r, c);
    }
    for (std::size_t i = 0; i < len; ++i) {
      auto [r, c] = at(grp, i);
      out(r, c) /= total;
    }
  }
  return g.record("softmax", std::move(out), {a.id}, [a = a.id, groups, len, at](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& y = g.val(self);
    Tensor& ga = g.grad_acc(a);
    for (std::size_t grp = 0; grp < groups; ++grp) {
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        auto [r, c] = at(grp, i);
        dot += go(r, c) * y(r, c);
      }
      for (std::size_t i = 0; i < len; ++i) {
        auto [r, c] = at(grp, i);
        ga(r, c) += y(r, c) * (go(r, c) - dot);
      }
    }
  });
}

Var embed(Var table, std::span<const int> ids) {
  Graph& g = *table.graph;
  const Tensor& w = g.val(table.id);
  require(!ids.empty(), "embed: empty id list");
  Tensor out(ids.size(), w.cols());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    require(id >= 0 && static_cast<std::size_t>(id) < w.rows(),
            "embed: id " + std::to_string(id) + " outside table of " + std::to_string(w.rows()) + " rows");
    if (id == 0) continue;
    for (std::size_t c = 0; c < w.cols(); ++c) out(t, c) = w(static_cast<std::size_t>(id), c);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return g.record("embed", std::move(out), {table.id}, [tbl = table.id, idv = std::move(idv)](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& gw = g.grad_acc(tbl);
    for (std::size_t t = 0; t < idv.size(); ++t) {
      if (idv[t] == 0) continue;
      const auto r = static_cast<std::size_t>(idv[t]);
      for (std::size_t c = 0; c < go.cols(); ++c) gw(r, c) += go(t, c);
    }
  });
}

Var sum(Var a, int axis) {
  require(axis >= -1 && axis <= 1, "sum axis must be -1, 0 or 1");
  Graph& g = *a.graph;
  const Tensor& x = g.val(a.id);
  Tensor out = axis == -1 ? Tensor(1, 1) : axis == 0 ? Tensor(1, x.cols()) : Tensor(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double v = x(r, c);
      if (axis == -1) {
        out[0] += v;
      } else if (axis == 0) {
        out(0, c) += v;
      } else {
        out(r, 0) += v;
      }
    }
  }
  return g.record("sum", std::move(out), {a.id}, [a = a.id, axis](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& ga = g.grad_acc(a);
    for (std::size_t r = 0; r < ga.rows(); ++r) {
      for (std::size_t c = 0; c < ga.cols(); ++c) {
        ga(r, c) += axis == -1 ? go[0] : axis == 0 ? go(0, c) : go(r, 0);
      }
    }
  });
}

Var neg_log_prob(Var dist, std::size_t index) {
  Graph& g = *dist.graph;
  const Tensor& p = g.val(dist.id);
  require(p.rows() == 1 && index < p.cols(), "neg_log_prob: index outside " + p.shape_string());
  Tensor out = Tensor::scalar(-std::log(p[index]));
  return g.record("neg_log_prob", std::move(out), {dist.id}, [d = dist.id, index](Graph& g, int self) {
    const double go = g.out_grad(self)[0];
    const double pv = g.val(d)[index];
    g.grad_acc(d)[index] += -go / pv;
  });
}

Var cross_entropy(Var logits, std::size_t index) {
  Graph& g = *logits.graph;
  const Tensor& x = g.val(logits.id);
  require(x.rows() == 1 && index < x.cols(), "cross_entropy: index outside " + x.shape_string());
  double mx = -INFINITY;
  for (std::size_t i = 0; i < x.cols(); ++i) mx = std::max(mx, x[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < x.cols(); ++i) total += std::exp(x[i] - mx);
  const double lse = mx + std::log(total);
  Tensor out = Tensor::scalar(lse - x[index]);
  return g.record("cross_entropy", std::move(out), {logits.id}, [l = logits.id, index, lse](Graph& g, int self) {
    const double go = g.out_grad(self)[0];
    const Tensor& x = g.val(l);
    Tensor& gl = g.grad_acc(l);
    for (std::size_t i = 0; i < x.cols(); ++i) {
      const double p = std::exp(x[i] - lse);
      gl[i] += go * (p - (i == index ? 1.0 : 0.0));
    }
  });
}

Var dropout(Var a, double p) {
  Graph& g = *a.graph;
  if (!g.training() || p <= 0.0) return a;
  require(p < 1.0, "dropout probability must be < 1");
  const Tensor& x = g.val(a.id);
  Tensor mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = g.rng().bernoulli(p) ? 0.0 : keep_scale;
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return g.record("dropout", std::move(out), {a.id}, [a = a.id, mask = std::move(mask)](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& ga = g.grad_acc(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * mask[i];
  });
}

// --- Gradient check ------------------------------------------------------------

GradCheckResult grad_check(const std::function<Var(Graph&)>& f, std::span<Parameter* const> params,
                           double eps) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var loss = f(g);
    g.backward(loss);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto eval = [&f]() {
    Graph g;
    return f(g).value().item();
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double up = eval();
      p.value[i] = saved - eps;
      const double down = eval();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace nl2sql::ad
