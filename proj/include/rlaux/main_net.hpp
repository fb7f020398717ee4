#pragma once

// The dual-head main network: a shared MLP feature extractor feeding a primary
// classification head (C outputs) and an auxiliary head (K = ψ·C outputs).
// Each head is two linear layers with a 512-wide hidden layer.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rlaux/aux_math.hpp"
#include "rlaux/checkpoint.hpp"
#include "rlaux/nn/layers.hpp"
#include "rlaux/nn/optim.hpp"

namespace rlaux {

struct MainNetConfig {
  int input_dim = 0;
  std::vector<int> extractor_hidden{128};
  int feature_dim = 256;
  int head_hidden = 512;
  HierarchyConfig hierarchy;
  bool use_bias = true;

  void validate() const;
  /// Canonical one-line description; its hash tags checkpoints.
  std::string describe() const;
};

template <typename Scalar>
class DualHeadNet {
 public:
  struct Logits {
    nn::Matrix<Scalar> primary;
    nn::Matrix<Scalar> aux;
  };
  struct TapeLogits {
    nn::Var<Scalar> primary;
    nn::Var<Scalar> aux;
  };

  DualHeadNet() = default;

  DualHeadNet(const MainNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    std::vector<int> sizes{cfg.input_dim};
    sizes.insert(sizes.end(), cfg.extractor_hidden.begin(), cfg.extractor_hidden.end());
    sizes.push_back(cfg.feature_dim);
    extractor_ = nn::Mlp<Scalar>("extractor", sizes, rng, /*relu_last=*/true, cfg.use_bias);
    primary_ = nn::Mlp<Scalar>("primary", {cfg.feature_dim, cfg.head_hidden, cfg.hierarchy.num_primary}, rng,
                               /*relu_last=*/false, cfg.use_bias);
    aux_ = nn::Mlp<Scalar>("aux", {cfg.feature_dim, cfg.head_hidden, cfg.hierarchy.num_aux()}, rng,
                           /*relu_last=*/false, cfg.use_bias);
  }

  const MainNetConfig& config() const { return cfg_; }
  const HierarchyConfig& hierarchy() const { return cfg_.hierarchy; }

  template <typename Derived>
  Logits forward(const Eigen::MatrixBase<Derived>& x) const {
    check_input(x.rows(), x.cols());
    nn::Matrix<Scalar> features = extractor_.forward(x);
    return {primary_.forward(features), aux_.forward(features)};
  }

  /// Primary-head logits only (evaluation path).
  template <typename Derived>
  nn::Matrix<Scalar> forward_primary(const Eigen::MatrixBase<Derived>& x) const {
    check_input(x.rows(), x.cols());
    return primary_.forward(extractor_.forward(x));
  }

  TapeLogits forward(nn::Tape<Scalar>& tape, nn::Var<Scalar> x, bool with_aux = true) {
    check_input(x.rows(), x.cols());
    nn::Var<Scalar> features = extractor_.forward(tape, x);
    TapeLogits out{primary_.forward(tape, features), {}};
    if (with_aux) out.aux = aux_.forward(tape, features);
    return out;
  }

  nn::ParameterList<Scalar> parameters() {
    nn::ParameterList<Scalar> out;
    extractor_.collect(out);
    primary_.collect(out);
    aux_.collect(out);
    return out;
  }

  std::vector<const nn::Parameter<Scalar>*> parameters() const {
    auto list = const_cast<DualHeadNet*>(this)->parameters();
    return {list.begin(), list.end()};
  }

  template <typename Other>
  DualHeadNet<Other> cast() const {
    DualHeadNet<Other> n;
    n.cfg_ = cfg_;
    n.extractor_ = extractor_.template cast<Other>();
    n.primary_ = primary_.template cast<Other>();
    n.aux_ = aux_.template cast<Other>();
    return n;
  }

 private:
  template <typename>
  friend class DualHeadNet;

  void check_input(Eigen::Index rows, Eigen::Index cols) const {
    if (rows == 0) throw DimensionError("main net: empty batch");
    if (cols != cfg_.input_dim) {
      throw DimensionError("main net: expected " + std::to_string(cfg_.input_dim) + " input features, got " +
                           std::to_string(cols));
    }
  }

  MainNetConfig cfg_;
  nn::Mlp<Scalar> extractor_;
  nn::Mlp<Scalar> primary_;
  nn::Mlp<Scalar> aux_;
};

/// Labels and per-sample auxiliary weights for one training batch. Without
/// aux labels the batch trains the primary head alone.
struct AuxTargets {
  std::span<const int> labels;    // global auxiliary labels, each inside its sample's block
  std::span<const double> weights;  // λ_i ≥ 0
};

/// mean_i [ CE(primary_i, y_i) + λ_i · focal(masked_softmax(aux_i, y_i), a_i) ] on the tape.
template <typename Scalar>
nn::Var<Scalar> weighted_total_loss(nn::Tape<Scalar>& tape, DualHeadNet<Scalar>& net,
                                    const nn::Matrix<Scalar>& x, std::span<const int> primary,
                                    const std::optional<AuxTargets>& aux, double focal_gamma) {
  auto logits = net.forward(tape, tape.constant(x), aux.has_value());
  nn::Var<Scalar> per_sample = nn::cross_entropy_per_sample(logits.primary, primary);
  if (aux) {
    if (aux->labels.size() != primary.size() || aux->weights.size() != primary.size()) {
      throw DimensionError("train batch: aux labels/weights length does not match batch size");
    }
    nn::Matrix<Scalar> lambdas(static_cast<Eigen::Index>(primary.size()), 1);
    for (std::size_t i = 0; i < primary.size(); ++i) {
      if (!(aux->weights[i] >= 0.0)) throw DomainError("train batch: auxiliary weight must be >= 0");
      lambdas(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(aux->weights[i]);
    }
    nn::Var<Scalar> focal = masked_focal_per_sample(logits.aux, primary, aux->labels, net.hierarchy(), focal_gamma);
    per_sample = nn::add(per_sample, nn::mul(focal, tape.constant(std::move(lambdas))));
  }
  return nn::mean(per_sample);
}

/// One SGD step on the weighted total loss. Returns the pre-step batch loss.
double train_batch(DualHeadNet<float>& net, nn::Sgd<float>& opt, const nn::MatrixF& x, std::span<const int> primary,
                   const std::optional<AuxTargets>& aux, int epoch, double focal_gamma = 2.0);

/// Per-sample primary cross-entropy (no gradient).
std::vector<double> primary_losses(const DualHeadNet<float>& net, const nn::MatrixF& x, std::span<const int> y);
std::vector<double> cross_entropy_rows(const nn::MatrixF& logits, std::span<const int> y);

Snapshot snapshot(const DualHeadNet<float>& net, int epoch = 0);
/// Throws CheckpointError if names or shapes differ.
void restore(DualHeadNet<float>& net, const Snapshot& snap);

std::uint64_t parameter_hash(const DualHeadNet<float>& net);

}  // namespace rlaux
