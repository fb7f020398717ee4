#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rlaux/nn/autograd.hpp"

namespace rlaux::nn {

/// Uniform draw in [lo, hi) built directly from generator bits so the stream
/// does not depend on the standard library's distribution implementation.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

template <typename Scalar>
class Linear {
 public:
  Linear() = default;

  // Weights and bias ~ U(−1/√fan_in, +1/√fan_in).
  Linear(const std::string& name, int in_features, int out_features, std::mt19937_64& rng, bool use_bias = true)
      : use_bias_(use_bias) {
    if (in_features <= 0 || out_features <= 0) throw DimensionError("linear layer " + name + ": non-positive size");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    Matrix<Scalar> w(in_features, out_features);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(uniform(rng, -bound, bound));
    Matrix<Scalar> b = Matrix<Scalar>::Zero(1, out_features);
    if (use_bias_) {
      for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<Scalar>(uniform(rng, -bound, bound));
    }
    weight_ = Parameter<Scalar>(name + ".weight", std::move(w));
    bias_ = Parameter<Scalar>(name + ".bias", std::move(b));
  }

  int in_features() const { return static_cast<int>(weight_.value.rows()); }
  int out_features() const { return static_cast<int>(weight_.value.cols()); }
  bool has_bias() const { return use_bias_; }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  const Parameter<Scalar>& weight() const { return weight_; }
  const Parameter<Scalar>& bias() const { return bias_; }

  template <typename Derived>
  Matrix<Scalar> forward(const Eigen::MatrixBase<Derived>& x) const {
    if (x.cols() != weight_.value.rows()) {
      throw DimensionError("linear " + weight_.name + ": expected " + std::to_string(weight_.value.rows()) +
                           " input columns, got " + std::to_string(x.cols()));
    }
    Matrix<Scalar> out = x * weight_.value;
    if (use_bias_) out.rowwise() += bias_.value.row(0);
    return out;
  }

  Var<Scalar> forward(Tape<Scalar>& tape, Var<Scalar> x) {
    if (use_bias_) return linear(x, tape.parameter(weight_), tape.parameter(bias_));
    return matmul(x, tape.parameter(weight_));
  }

  void collect(ParameterList<Scalar>& out) {
    out.push_back(&weight_);
    if (use_bias_) out.push_back(&bias_);
  }

  template <typename Other>
  Linear<Other> cast() const {
    Linear<Other> l;
    l.use_bias_ = use_bias_;
    l.weight_ = Parameter<Other>(weight_.name, weight_.value.template cast<Other>());
    l.bias_ = Parameter<Other>(bias_.name, bias_.value.template cast<Other>());
    return l;
  }

 private:
  template <typename>
  friend class Linear;

  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  bool use_bias_ = true;
};

/// Stack of linear layers with ReLU after every layer except, optionally, the
/// last one.
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  Mlp(const std::string& name, const std::vector<int>& sizes, std::mt19937_64& rng, bool relu_last,
      bool use_bias = true)
      : relu_last_(relu_last) {
    if (sizes.size() < 2) throw DimensionError("mlp " + name + " needs at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      layers_.emplace_back(name + "." + std::to_string(i), sizes[i], sizes[i + 1], rng, use_bias);
    }
  }

  int in_features() const { return layers_.front().in_features(); }
  int out_features() const { return layers_.back().out_features(); }
  std::vector<Linear<Scalar>>& layers() { return layers_; }
  const std::vector<Linear<Scalar>>& layers() const { return layers_; }

  template <typename Derived>
  Matrix<Scalar> forward(const Eigen::MatrixBase<Derived>& x) const {
    Matrix<Scalar> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h);
      if (relu_last_ || i + 1 < layers_.size()) h = h.cwiseMax(Scalar(0));
    }
    return h;
  }

  Var<Scalar> forward(Tape<Scalar>& tape, Var<Scalar> x) {
    Var<Scalar> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(tape, h);
      if (relu_last_ || i + 1 < layers_.size()) h = relu(h);
    }
    return h;
  }

  void collect(ParameterList<Scalar>& out) {
    for (auto& l : layers_) l.collect(out);
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> m;
    m.relu_last_ = relu_last_;
    for (const auto& l : layers_) m.layers_.push_back(l.template cast<Other>());
    return m;
  }

 private:
  template <typename>
  friend class Mlp;

  std::vector<Linear<Scalar>> layers_;
  bool relu_last_ = false;
};

}  // namespace rlaux::nn
