#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every op applied during one forward pass. Values live on the
// tape; a Var is a (tape, node id) handle. backward() walks the tape in reverse
// and accumulates d(loss)/d(value) into each Parameter::grad reached from the
// loss. Ops with piecewise behaviour (relu, clamp, minimum) fold their branch
// decisions into a signature when tracking is on, so finite-difference checks
// can tell a genuine gradient bug from a step across a kink.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rlaux/error.hpp"
#include "rlaux/nn/tensor.hpp"

namespace rlaux::nn {

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>*>;

template <typename Scalar>
void zero_grad(std::span<Parameter<Scalar>* const> params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  bool attached() const { return tape != nullptr; }
  const Matrix<Scalar>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool track_branches = false) : track_branches_(track_branches) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Mat value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, {}});
    return {this, nodes_.size() - 1};
  }

  Var<Scalar> parameter(Parameter<Scalar>& p) {
    nodes_.push_back(Node{p.value, {}, {}, &p, true, {}});
    return {this, nodes_.size() - 1};
  }

  // Records a derived value. The node needs a gradient iff any input does.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> inputs, BackwardFn fn) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) {
      check_owned(in);
      needs = needs || nodes_[in.id].requires_grad;
      ids.push_back(in.id);
    }
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs,
                          std::move(ids)});
    return {this, nodes_.size() - 1};
  }

  const Mat& value(std::size_t id) const { return nodes_.at(id).value; }
  const Mat& value(Var<Scalar> v) const {
    check_owned(v);
    return nodes_[v.id].value;
  }
  const Mat& grad(std::size_t id) const { return nodes_.at(id).grad; }
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_.at(id).inputs.at(k); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Adds g into the gradient slot of node id (no-op for constants).
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Propagates d(loss)/d(node) back to every parameter reached from `loss`.
  /// Parameter gradients accumulate across calls; zero them between steps.
  void backward(Var<Scalar> loss) {
    if (!loss.attached()) throw GraphError("backward called on a detached value");
    if (loss.tape != this) throw GraphError("backward called with a value recorded on another tape");
    Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) {
      throw GraphError("backward requires a scalar loss, got " + std::to_string(root.value.rows()) + "x" +
                       std::to_string(root.value.cols()));
    }
    if (!root.requires_grad) throw GraphError("backward called on a value that depends on no parameter");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    root.grad = Mat::Ones(1, 1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.param != nullptr) n.param->grad += n.grad;
      if (n.backward) n.backward(*this, i);
    }
  }

  bool tracking_branches() const { return track_branches_; }
  void note_branches(std::uint64_t bits) {
    // FNV-1a style mixing; only equality of signatures matters.
    branch_signature_ ^= bits;
    branch_signature_ *= 0x100000001b3ULL;
  }
  std::uint64_t branch_signature() const { return branch_signature_; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    Parameter<Scalar>* param;
    bool requires_grad;
    std::vector<std::size_t> inputs;
  };

  void check_owned(const Var<Scalar>& v) const {
    if (v.tape != this) throw GraphError("value does not belong to this tape");
    if (v.id >= nodes_.size()) throw GraphError("dangling tape value");
  }

  std::vector<Node> nodes_;
  bool track_branches_;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

template <typename Scalar>
const Matrix<Scalar>& Var<Scalar>::value() const {
  if (!attached()) throw GraphError("value requested from a detached Var");
  return tape->value(*this);
}

namespace detail {

template <typename Scalar>
void require_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (!a.attached() || a.tape != b.tape) throw GraphError("operands recorded on different tapes");
}

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

template <typename Derived>
std::uint64_t mask_bits(const Eigen::DenseBase<Derived>& mask) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      h ^= static_cast<std::uint64_t>(mask(r, c)) + 1;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace detail

/// x[B×I]·W[I×O] + b[1×O] (bias broadcast over rows).
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b) {
  detail::require_same_tape(x, w);
  detail::require_same_tape(x, b);
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw DimensionError("linear: cannot apply " + std::to_string(wv.rows()) + "x" + std::to_string(wv.cols()) +
                         " weight to " + std::to_string(xv.rows()) + "x" + std::to_string(xv.cols()) +
                         " input with bias of width " + std::to_string(bv.cols()));
  }
  Matrix<Scalar> out = xv * wv;
  out.rowwise() += bv.row(0);
  return x.tape->record(std::move(out), {x, w, b}, [](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const std::size_t xi = t.input(self, 0), wi = t.input(self, 1), bi = t.input(self, 2);
    if (t.requires_grad(xi)) t.accumulate(xi, g * t.value(wi).transpose());
    if (t.requires_grad(wi)) t.accumulate(wi, t.value(xi).transpose() * g);
    if (t.requires_grad(bi)) t.accumulate(bi, g.colwise().sum());
  });
}

/// Bias-free variant: x·W.
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> x, Var<Scalar> w) {
  detail::require_same_tape(x, w);
  if (x.cols() != w.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(x.cols()) + " and " +
                         std::to_string(w.rows()) + " differ");
  }
  Matrix<Scalar> out = x.value() * w.value();
  return x.tape->record(std::move(out), {x, w}, [](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const std::size_t xi = t.input(self, 0), wi = t.input(self, 1);
    if (t.requires_grad(xi)) t.accumulate(xi, g * t.value(wi).transpose());
    if (t.requires_grad(wi)) t.accumulate(wi, t.value(xi).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  const auto& xv = x.value();
  if (x.tape->tracking_branches()) x.tape->note_branches(detail::mask_bits((xv.array() > Scalar(0)).eval()));
  Matrix<Scalar> out = xv.cwiseMax(Scalar(0));
  return x.tape->record(std::move(out), {x}, [](Tape<Scalar>& t, std::size_t self) {
    const std::size_t xi = t.input(self, 0);
    t.accumulate(xi, (t.value(xi).array() > Scalar(0)).select(t.grad(self), Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  return a.tape->record(a.value() + b.value(), {a, b}, [](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(t.input(self, 0), t.grad(self));
    t.accumulate(t.input(self, 1), t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  return a.tape->record(a.value() - b.value(), {a, b}, [](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(t.input(self, 0), t.grad(self));
    t.accumulate(t.input(self, 1), -t.grad(self));
  });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "mul");
  return a.tape->record(a.value().cwiseProduct(b.value()), {a, b}, [](Tape<Scalar>& t, std::size_t self) {
    const std::size_t ai = t.input(self, 0), bi = t.input(self, 1);
    if (t.requires_grad(ai)) t.accumulate(ai, t.grad(self).cwiseProduct(t.value(bi)));
    if (t.requires_grad(bi)) t.accumulate(bi, t.grad(self).cwiseProduct(t.value(ai)));
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  return a.tape->record(a.value() * s, {a}, [s](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(t.input(self, 0), t.grad(self) * s);
  });
}

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().exp().matrix();
  return a.tape->record(std::move(out), {a}, [](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(t.input(self, 0), t.grad(self).cwiseProduct(t.value(self)));
  });
}

template <typename Scalar>
Var<Scalar> square(Var<Scalar> a) {
  return a.tape->record(a.value().cwiseAbs2(), {a}, [](Tape<Scalar>& t, std::size_t self) {
    const std::size_t ai = t.input(self, 0);
    t.accumulate(ai, Scalar(2) * t.grad(self).cwiseProduct(t.value(ai)));
  });
}

/// Elementwise min(a, b); ties route the gradient to `a`.
template <typename Scalar>
Var<Scalar> minimum(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "minimum");
  auto pick_a = (a.value().array() <= b.value().array()).eval();
  if (a.tape->tracking_branches()) a.tape->note_branches(detail::mask_bits(pick_a));
  Matrix<Scalar> out = pick_a.select(a.value(), b.value());
  return a.tape->record(std::move(out), {a, b}, [](Tape<Scalar>& t, std::size_t self) {
    const std::size_t ai = t.input(self, 0), bi = t.input(self, 1);
    auto take_a = (t.value(ai).array() <= t.value(bi).array()).eval();
    t.accumulate(ai, take_a.select(t.grad(self), Scalar(0)));
    t.accumulate(bi, take_a.select(Scalar(0), t.grad(self)));
  });
}

/// Elementwise clamp to [lo, hi]; gradient is zero where the bound is active.
template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> a, Scalar lo, Scalar hi) {
  auto inside = (a.value().array() >= lo && a.value().array() <= hi).eval();
  if (a.tape->tracking_branches()) a.tape->note_branches(detail::mask_bits(inside));
  Matrix<Scalar> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape->record(std::move(out), {a}, [lo, hi](Tape<Scalar>& t, std::size_t self) {
    const std::size_t ai = t.input(self, 0);
    auto in = (t.value(ai).array() >= lo && t.value(ai).array() <= hi).eval();
    t.accumulate(ai, in.select(t.grad(self), Scalar(0)));
  });
}

/// Mean of all entries as a 1×1 value; the sum is accumulated in double.
template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  const auto& av = a.value();
  const double n = static_cast<double>(av.size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(av.template cast<double>().sum() / n);
  return a.tape->record(std::move(out), {a}, [](Tape<Scalar>& t, std::size_t self) {
    const std::size_t ai = t.input(self, 0);
    const auto& in = t.value(ai);
    const Scalar g = t.grad(self)(0, 0) / static_cast<Scalar>(in.size());
    t.accumulate(ai, Matrix<Scalar>::Constant(in.rows(), in.cols(), g));
  });
}

/// Row sums: B×K → B×1.
template <typename Scalar>
Var<Scalar> row_sum(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().rowwise().sum();
  return a.tape->record(std::move(out), {a}, [](Tape<Scalar>& t, std::size_t self) {
    const std::size_t ai = t.input(self, 0);
    const auto cols = t.value(ai).cols();
    t.accumulate(ai, t.grad(self).replicate(1, cols));
  });
}

/// Numerically stable row-wise log-softmax.
template <typename Scalar>
Var<Scalar> log_softmax(Var<Scalar> a) {
  const auto& z = a.value();
  Matrix<Scalar> out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    const Scalar lse = m + std::log((z.row(r).array() - m).exp().sum());
    out.row(r) = z.row(r).array() - lse;
  }
  return a.tape->record(std::move(out), {a}, [](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Matrix<Scalar> p = t.value(self).array().exp().matrix();
    Matrix<Scalar> gin = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate(t.input(self, 0), gin);
  });
}

/// out[b] = a[b, index[b]]: B×K → B×1.
template <typename Scalar>
Var<Scalar> pick(Var<Scalar> a, std::span<const int> index) {
  const auto& av = a.value();
  if (static_cast<Eigen::Index>(index.size()) != av.rows()) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + std::to_string(av.rows()) +
                         " rows");
  }
  Matrix<Scalar> out(av.rows(), 1);
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    const int k = index[static_cast<std::size_t>(r)];
    if (k < 0 || k >= av.cols()) throw LabelError("pick: index " + std::to_string(k) + " out of range");
    out(r, 0) = av(r, k);
  }
  std::vector<int> idx(index.begin(), index.end());
  return a.tape->record(std::move(out), {a}, [idx = std::move(idx)](Tape<Scalar>& t, std::size_t self) {
    const std::size_t ai = t.input(self, 0);
    Matrix<Scalar> gin = Matrix<Scalar>::Zero(t.value(ai).rows(), t.value(ai).cols());
    for (std::size_t r = 0; r < idx.size(); ++r) gin(static_cast<Eigen::Index>(r), idx[r]) = t.grad(self)(r, 0);
    t.accumulate(ai, gin);
  });
}

/// Row-wise softmax with max subtraction. Plain function, no tape.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    auto e = (z.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

/// Per-sample cross-entropy −log softmax(logits)[target]: B×C → B×1.
template <typename Scalar>
Var<Scalar> cross_entropy_per_sample(Var<Scalar> logits, std::span<const int> targets) {
  const auto& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(z.rows()) + " rows");
  }
  for (int y : targets) {
    if (y < 0 || y >= z.cols()) {
      throw LabelError("cross_entropy: target " + std::to_string(y) + " outside [0, " + std::to_string(z.cols()) +
                       ")");
    }
  }
  Matrix<Scalar> probs = softmax(z);
  Matrix<Scalar> out(z.rows(), 1);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    const Scalar lse = m + std::log((z.row(r).array() - m).exp().sum());
    out(r, 0) = lse - z(r, targets[static_cast<std::size_t>(r)]);
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return logits.tape->record(
      std::move(out), {logits},
      [probs = std::move(probs), tgt = std::move(tgt)](Tape<Scalar>& t, std::size_t self) {
        Matrix<Scalar> gin = probs;
        for (std::size_t r = 0; r < tgt.size(); ++r) gin(static_cast<Eigen::Index>(r), tgt[r]) -= Scalar(1);
        gin.array().colwise() *= t.grad(self).col(0).array();
        t.accumulate(t.input(self, 0), gin);
      });
}

/// Batch-mean cross-entropy as a 1×1 value.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const int> targets) {
  return mean(cross_entropy_per_sample(logits, targets));
}

}  // namespace rlaux::nn
