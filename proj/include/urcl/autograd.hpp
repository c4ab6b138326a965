#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "urcl/errors.hpp"
#include "urcl/tensor.hpp"

/// Reverse-mode differentiation over dense row-major matrices.
///
/// Each operation returns a Var whose node remembers its parents and a
/// backward closure. backward() walks the graph in reverse topological order
/// and accumulates gradients into every node that requires one. Graphs are
/// built only while gradient recording is enabled and at least one operand
/// requires a gradient; otherwise operations produce constants.
namespace urcl::ad {

template <typename Scalar>
struct Node {
  Mat<Scalar> value;
  Mat<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }

  Node& parent(std::size_t i) { return *parents[i]; }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
class Var {
 public:
  using NodeType = Node<Scalar>;

  Var() = default;
  explicit Var(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Var constant(Mat<Scalar> value) {
    auto node = std::make_shared<NodeType>();
    node->value = std::move(value);
    return Var(std::move(node));
  }

  static Var parameter(Mat<Scalar> value) {
    auto node = std::make_shared<NodeType>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Mat<Scalar>& value() const { return node_->value; }
  Mat<Scalar>& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }

  /// Gradient, or a zero matrix of the value's shape if none has been accumulated.
  Mat<Scalar> grad() const {
    if (has_grad()) return node_->grad;
    return Mat<Scalar>::Zero(node_->value.rows(), node_->value.cols());
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Scalar item() const {
    if (node_->value.size() != 1) throw ContractError("Var::item on a non-scalar value");
    return node_->value(0, 0);
  }

  const std::shared_ptr<NodeType>& node() const { return node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

/// Builds the result of an operation. The backward closure receives the result
/// node; parents are reachable through Node::parent(i).
template <typename Scalar, typename Backward>
Var<Scalar> make_op(Mat<Scalar> value, std::initializer_list<Var<Scalar>> inputs, Backward&& backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (grad_enabled() && any) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::forward<Backward>(backward);
  }
  return Var<Scalar>(std::move(node));
}

/// Reverse sweep from a 1x1 root. Intermediate gradients are released as the sweep passes them.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (root.value().size() != 1) throw ContractError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Mat<Scalar>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>& node = **it;
    if (!node.backward) continue;
    if (node.grad.size() != 0) node.backward(node);
    node.grad.resize(0, 0);
  }
}

template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& a) {
  return Var<Scalar>::constant(a.value());
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) throw ContractError("matmul: inner dimensions differ");
  Mat<Scalar> out = a.value() * b.value();
  return make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    auto& x = self.parent(0);
    auto& w = self.parent(1);
    if (x.requires_grad) x.accumulate(self.grad * w.value.transpose());
    if (w.requires_grad) w.accumulate(x.value.transpose() * self.grad);
  });
}

/// a * b^T
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.cols()) throw ContractError("matmul_nt: column counts differ");
  Mat<Scalar> out = a.value() * b.value().transpose();
  return make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    auto& x = self.parent(0);
    auto& y = self.parent(1);
    if (x.requires_grad) x.accumulate(self.grad * y.value);
    if (y.requires_grad) y.accumulate(self.grad.transpose() * x.value);
  });
}

namespace detail {
template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  Mat<Scalar> out = a.value() + b.value();
  return make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    self.parent(0).accumulate(self.grad);
    self.parent(1).accumulate(self.grad);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  Mat<Scalar> out = a.value() - b.value();
  return make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    self.parent(0).accumulate(self.grad);
    self.parent(1).accumulate(-self.grad);
  });
}

template <typename Scalar>
Var<Scalar> hadamard(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "hadamard");
  Mat<Scalar> out = a.value().cwiseProduct(b.value());
  return make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    auto& x = self.parent(0);
    auto& y = self.parent(1);
    if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  Mat<Scalar> out = a.value() * factor;
  return make_op<Scalar>(std::move(out), {a}, [factor](Node<Scalar>& self) {
    self.parent(0).accumulate(self.grad * factor);
  });
}

/// Adds a 1 x F bias row to every row of a.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw ContractError("add_bias: bias must be 1 x cols");
  Mat<Scalar> out = a.value().rowwise() + bias.value().row(0);
  return make_op<Scalar>(std::move(out), {a, bias}, [](Node<Scalar>& self) {
    self.parent(0).accumulate(self.grad);
    auto& b = self.parent(1);
    if (b.requires_grad) b.accumulate(self.grad.colwise().sum());
  });
}

/// x * W + b
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  return add_bias(matmul(x, weight), bias);
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  Mat<Scalar> out = a.value().array().tanh().matrix();
  return make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    self.parent(0).accumulate(
        (self.grad.array() * (Scalar(1) - self.value.array().square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Mat<Scalar> out = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  return make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    self.parent(0).accumulate(
        (self.grad.array() * self.value.array() * (Scalar(1) - self.value.array())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Mat<Scalar> out = a.value().cwiseMax(Scalar(0));
  return make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    auto& x = self.parent(0);
    x.accumulate((x.value.array() > Scalar(0)).select(self.grad, Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  Mat<Scalar> out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    auto row = a.value().row(i);
    auto e = (row.array() - row.maxCoeff()).exp();
    out.row(i) = e / e.sum();
  }
  return make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    const Mat<Scalar>& y = self.value;
    Vec<Scalar> dots = (self.grad.cwiseProduct(y)).rowwise().sum();
    Mat<Scalar> g = y.cwiseProduct(self.grad.colwise() - dots);
    self.parent(0).accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    auto& x = self.parent(0);
    x.accumulate(Mat<Scalar>::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// [a | b]
template <typename Scalar>
Var<Scalar> hcat(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows()) throw ContractError("hcat: row counts differ");
  Mat<Scalar> out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index split = a.cols();
  return make_op<Scalar>(std::move(out), {a, b}, [split](Node<Scalar>& self) {
    self.parent(0).accumulate(self.grad.leftCols(split));
    self.parent(1).accumulate(self.grad.rightCols(self.grad.cols() - split));
  });
}

/// out(b, t, v) = x(b, t - d, v), zero where t < d. Causal delay along the step axis.
template <typename Scalar>
Var<Scalar> time_shift(const Var<Scalar>& x, SeqLayout layout, Index delay) {
  if (x.rows() != layout.rows()) throw ContractError("time_shift: layout does not match rows");
  Mat<Scalar> out = Mat<Scalar>::Zero(x.rows(), x.cols());
  const Index slab = layout.nodes;
  for (Index b = 0; b < layout.batch; ++b) {
    for (Index t = delay; t < layout.steps; ++t) {
      out.middleRows(layout.row(b, t, 0), slab) = x.value().middleRows(layout.row(b, t - delay, 0), slab);
    }
  }
  return make_op<Scalar>(std::move(out), {x}, [layout, delay](Node<Scalar>& self) {
    Mat<Scalar> g = Mat<Scalar>::Zero(self.grad.rows(), self.grad.cols());
    const Index slab = layout.nodes;
    for (Index b = 0; b < layout.batch; ++b) {
      for (Index t = delay; t < layout.steps; ++t) {
        g.middleRows(layout.row(b, t - delay, 0), slab) = self.grad.middleRows(layout.row(b, t, 0), slab);
      }
    }
    self.parent(0).accumulate(g);
  });
}

/// Rows (b, v) of step t; a zero matrix when t is before the first step.
template <typename Scalar>
Var<Scalar> select_step(const Var<Scalar>& x, SeqLayout layout, Index step) {
  if (x.rows() != layout.rows()) throw ContractError("select_step: layout does not match rows");
  if (step >= layout.steps) throw ContractError("select_step: step out of range");
  const Index slab = layout.nodes;
  if (step < 0) return Var<Scalar>::constant(Mat<Scalar>::Zero(layout.batch * slab, x.cols()));
  Mat<Scalar> out(layout.batch * slab, x.cols());
  for (Index b = 0; b < layout.batch; ++b) {
    out.middleRows(b * slab, slab) = x.value().middleRows(layout.row(b, step, 0), slab);
  }
  return make_op<Scalar>(std::move(out), {x}, [layout, step](Node<Scalar>& self) {
    auto& src = self.parent(0);
    Mat<Scalar> g = Mat<Scalar>::Zero(src.value.rows(), src.value.cols());
    const Index slab = layout.nodes;
    for (Index b = 0; b < layout.batch; ++b) {
      g.middleRows(layout.row(b, step, 0), slab) = self.grad.middleRows(b * slab, slab);
    }
    src.accumulate(g);
  });
}

namespace detail {

/// (blocks*n) x w with rows (block, node)  <->  n x (blocks*w) with columns (block, channel).
template <typename Scalar>
Mat<Scalar> nodes_to_front(const Mat<Scalar>& x, Index n) {
  const Index blocks = x.rows() / n, w = x.cols();
  Mat<Scalar> out(n, blocks * w);
  for (Index k = 0; k < blocks; ++k) {
    for (Index u = 0; u < n; ++u) out.row(u).segment(k * w, w) = x.row(k * n + u);
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> nodes_to_back(const Mat<Scalar>& x, Index w) {
  const Index n = x.rows(), blocks = x.cols() / w;
  Mat<Scalar> out(blocks * n, w);
  for (Index k = 0; k < blocks; ++k) {
    for (Index u = 0; u < n; ++u) out.row(k * n + u) = x.row(u).segment(k * w, w);
  }
  return out;
}

}  // namespace detail

/// Applies the |V| x |V| operator to every consecutive block of |V| rows of x.
template <typename Scalar>
Var<Scalar> node_mix(const Var<Scalar>& op, const Var<Scalar>& x) {
  const Index n = op.rows();
  if (op.cols() != n || n == 0 || x.rows() % n != 0) throw ContractError("node_mix: shape mismatch");
  const Index w = x.cols();
  Mat<Scalar> front = detail::nodes_to_front(x.value(), n);
  Mat<Scalar> mixed = op.value() * front;
  Mat<Scalar> out = detail::nodes_to_back(mixed, w);
  const bool keep_input = op.requires_grad() && grad_enabled();
  return make_op<Scalar>(std::move(out), {op, x},
                         [n, w, front = keep_input ? std::move(front) : Mat<Scalar>()](Node<Scalar>& self) {
                           auto& p = self.parent(0);
                           auto& v = self.parent(1);
                           const Mat<Scalar> g_front = detail::nodes_to_front(self.grad, n);
                           if (v.requires_grad) v.accumulate(detail::nodes_to_back<Scalar>(p.value.transpose() * g_front, w));
                           if (p.requires_grad) p.accumulate(g_front * front.transpose());
                         });
}

/// node_mix with a fixed sparse operator that receives no gradient.
template <typename Scalar>
Var<Scalar> node_mix(const Eigen::SparseMatrix<Scalar, Eigen::RowMajor>& op, const Var<Scalar>& x) {
  const Index n = op.rows();
  if (op.cols() != n || n == 0 || x.rows() % n != 0) throw ContractError("node_mix: shape mismatch");
  const Index w = x.cols();
  const Mat<Scalar> front = detail::nodes_to_front(x.value(), n);
  Mat<Scalar> mixed = op * front;
  Mat<Scalar> out = detail::nodes_to_back(mixed, w);
  return make_op<Scalar>(std::move(out), {x}, [n, w, op](Node<Scalar>& self) {
    const Mat<Scalar> g_front = detail::nodes_to_front(self.grad, n);
    self.parent(0).accumulate(detail::nodes_to_back<Scalar>(op.transpose() * g_front, w));
  });
}

/// Mean of each consecutive block of `nodes` rows: (B*|V|) x F -> B x F.
template <typename Scalar>
Var<Scalar> mean_over_nodes(const Var<Scalar>& x, Index nodes) {
  if (nodes <= 0 || x.rows() % nodes != 0) throw ContractError("mean_over_nodes: shape mismatch");
  const Index batch = x.rows() / nodes;
  Mat<Scalar> out(batch, x.cols());
  for (Index b = 0; b < batch; ++b) out.row(b) = x.value().middleRows(b * nodes, nodes).colwise().mean();
  return make_op<Scalar>(std::move(out), {x}, [nodes, batch](Node<Scalar>& self) {
    Mat<Scalar> g(batch * nodes, self.grad.cols());
    const Scalar inv = Scalar(1) / static_cast<Scalar>(nodes);
    for (Index b = 0; b < batch; ++b) g.middleRows(b * nodes, nodes).rowwise() = self.grad.row(b) * inv;
    self.parent(0).accumulate(g);
  });
}

/// Scales each row to unit l2 norm. Zero rows stay zero and pass no gradient.
template <typename Scalar>
Var<Scalar> normalize_rows(const Var<Scalar>& x) {
  Vec<Scalar> norms = x.value().rowwise().norm();
  Mat<Scalar> out = x.value();
  for (Index i = 0; i < out.rows(); ++i) {
    if (norms(i) > Scalar(0)) {
      out.row(i) /= norms(i);
    } else {
      out.row(i).setZero();
    }
  }
  return make_op<Scalar>(std::move(out), {x}, [norms](Node<Scalar>& self) {
    const Mat<Scalar>& y = self.value;
    Mat<Scalar> g = Mat<Scalar>::Zero(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      if (norms(i) <= Scalar(0)) continue;
      const Scalar along = y.row(i).dot(self.grad.row(i));
      g.row(i) = (self.grad.row(i) - along * y.row(i)) / norms(i);
    }
    self.parent(0).accumulate(g);
  });
}

/// mean |prediction - target| over every element. The subgradient at zero is zero.
template <typename Scalar>
Var<Scalar> mean_abs_error(const Var<Scalar>& prediction, const Var<Scalar>& target) {
  detail::require_same_shape(prediction, target, "mean_abs_error");
  Mat<Scalar> out(1, 1);
  out(0, 0) = (prediction.value() - target.value()).cwiseAbs().mean();
  return make_op<Scalar>(std::move(out), {prediction, target}, [](Node<Scalar>& self) {
    auto& p = self.parent(0);
    auto& t = self.parent(1);
    const Scalar w = self.grad(0, 0) / static_cast<Scalar>(p.value.size());
    Mat<Scalar> sign = (p.value - t.value).unaryExpr([](Scalar d) {
      return d > Scalar(0) ? Scalar(1) : (d < Scalar(0) ? Scalar(-1) : Scalar(0));
    });
    if (p.requires_grad) p.accumulate(sign * w);
    if (t.requires_grad) t.accumulate(sign * -w);
  });
}

/// Named leaf parameters in a fixed insertion order.
template <typename Scalar>
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Var<Scalar>>;

  Var<Scalar> add(std::string name, Mat<Scalar> value) {
    if (find(name)) throw ContractError("duplicate parameter name: " + name);
    entries_.emplace_back(std::move(name), Var<Scalar>::parameter(std::move(value)));
    return entries_.back().second;
  }

  const Var<Scalar>* find(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.first == name) return &e.second;
    }
    return nullptr;
  }

  const Var<Scalar>& at(const std::string& name) const {
    const Var<Scalar>* v = find(name);
    if (v == nullptr) throw ContractError("unknown parameter: " + name);
    return *v;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.second.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  /// Independent copy: same names and values, fresh nodes, no gradients.
  ParameterSet deep_copy() const {
    ParameterSet out;
    for (const auto& e : entries_) out.add(e.first, e.second.value());
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace urcl::ad
