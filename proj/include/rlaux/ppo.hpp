#pragma once

// The labeling agent: an MLP feature extractor over (input, one-hot primary
// label) with a ψ-way sub-label head, an optional 21-way weight head and a
// scalar value head, trained with clipped PPO and GAE.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rlaux/aux_math.hpp"
#include "rlaux/checkpoint.hpp"
#include "rlaux/env.hpp"
#include "rlaux/nn/layers.hpp"
#include "rlaux/nn/optim.hpp"

namespace rlaux {

struct PpoConfig {
  double learning_rate = 3e-4;
  double entropy_coef = 0.01;
  double clip_epsilon = 0.2;
  double gae_gamma = 0.99;
  double gae_lambda = 0.95;
  int update_epochs = 4;
  int minibatch_size = 256;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;  // ≤ 0 disables clipping

  void validate() const;
};

struct PolicyNetConfig {
  int input_dim = 0;
  HierarchyConfig hierarchy;
  std::vector<int> extractor_hidden{128};
  int feature_dim = 256;
  bool weight_aware = false;

  int observation_dim() const { return input_dim + hierarchy.num_primary; }
  void validate() const;
  std::string describe() const;
};

template <typename Scalar>
class PolicyNet {
 public:
  struct Heads {
    nn::Matrix<Scalar> label_logits;   // B×ψ
    nn::Matrix<Scalar> weight_logits;  // B×21, empty unless weight-aware
    nn::Matrix<Scalar> values;         // B×1
  };
  struct TapeHeads {
    nn::Var<Scalar> label_logits;
    std::optional<nn::Var<Scalar>> weight_logits;
    nn::Var<Scalar> values;
  };

  PolicyNet() = default;

  PolicyNet(const PolicyNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    std::vector<int> sizes{cfg.observation_dim()};
    sizes.insert(sizes.end(), cfg.extractor_hidden.begin(), cfg.extractor_hidden.end());
    sizes.push_back(cfg.feature_dim);
    extractor_ = nn::Mlp<Scalar>("policy.extractor", sizes, rng, /*relu_last=*/true);
    label_head_ = nn::Linear<Scalar>("policy.label", cfg.feature_dim, cfg.hierarchy.hierarchy_factor, rng);
    if (cfg.weight_aware) {
      weight_head_ = nn::Linear<Scalar>("policy.weight", cfg.feature_dim, WeightAction::kNumClasses, rng);
    }
    value_head_ = nn::Linear<Scalar>("value", cfg.feature_dim, 1, rng);
  }

  const PolicyNetConfig& config() const { return cfg_; }

  /// Observation row: the input features followed by the one-hot primary label.
  template <typename Derived>
  nn::RowVector<Scalar> encode(const Eigen::MatrixBase<Derived>& x, int primary_label) const {
    cfg_.hierarchy.check_label(primary_label);
    if (x.size() != cfg_.input_dim) {
      throw DimensionError("policy: expected " + std::to_string(cfg_.input_dim) + " input features, got " +
                           std::to_string(x.size()));
    }
    nn::RowVector<Scalar> row = nn::RowVector<Scalar>::Zero(cfg_.observation_dim());
    row.head(cfg_.input_dim) = x.reshaped().transpose().template cast<Scalar>();
    row(cfg_.input_dim + primary_label) = Scalar(1);
    return row;
  }

  template <typename Derived>
  Heads forward(const Eigen::MatrixBase<Derived>& obs) const {
    nn::Matrix<Scalar> f = extractor_.forward(obs);
    Heads h{label_head_.forward(f), {}, value_head_.forward(f)};
    if (cfg_.weight_aware) h.weight_logits = weight_head_.forward(f);
    return h;
  }

  TapeHeads forward(nn::Tape<Scalar>& tape, nn::Var<Scalar> obs) {
    nn::Var<Scalar> f = extractor_.forward(tape, obs);
    TapeHeads h{label_head_.forward(tape, f), std::nullopt, value_head_.forward(tape, f)};
    if (cfg_.weight_aware) h.weight_logits = weight_head_.forward(tape, f);
    return h;
  }

  nn::ParameterList<Scalar> parameters() {
    nn::ParameterList<Scalar> out;
    extractor_.collect(out);
    label_head_.collect(out);
    if (cfg_.weight_aware) weight_head_.collect(out);
    value_head_.collect(out);
    return out;
  }

  std::vector<const nn::Parameter<Scalar>*> parameters() const {
    auto list = const_cast<PolicyNet*>(this)->parameters();
    return {list.begin(), list.end()};
  }

  template <typename Other>
  PolicyNet<Other> cast() const {
    PolicyNet<Other> p;
    p.cfg_ = cfg_;
    p.extractor_ = extractor_.template cast<Other>();
    p.label_head_ = label_head_.template cast<Other>();
    p.weight_head_ = weight_head_.template cast<Other>();
    p.value_head_ = value_head_.template cast<Other>();
    return p;
  }

 private:
  template <typename>
  friend class PolicyNet;

  PolicyNetConfig cfg_;
  nn::Mlp<Scalar> extractor_;
  nn::Linear<Scalar> label_head_;
  nn::Linear<Scalar> weight_head_;
  nn::Linear<Scalar> value_head_;
};

/// min(r·A, clip(r, 1−ε, 1+ε)·A) for one sample.
double clipped_surrogate_term(double ratio, double advantage, double epsilon);

/// Rollout minibatch in the layout the loss consumes.
template <typename Scalar>
struct PpoBatch {
  nn::Matrix<Scalar> observations;
  std::vector<int> labels;
  std::vector<int> weight_indices;  // empty unless weight-aware
  nn::Matrix<Scalar> old_log_probs;  // B×1
  nn::Matrix<Scalar> advantages;     // B×1
  nn::Matrix<Scalar> returns;        // B×1
};

template <typename Scalar>
struct PpoLossTerms {
  nn::Var<Scalar> loss;       // −surrogate − c_e·entropy + c_v·value_mse
  nn::Var<Scalar> ratio;      // B×1
  nn::Var<Scalar> surrogate;  // 1×1, mean clipped objective
  nn::Var<Scalar> entropy;    // 1×1, mean joint policy entropy
  nn::Var<Scalar> value_loss; // 1×1
};

/// Builds the clipped PPO objective on the tape.
template <typename Scalar>
PpoLossTerms<Scalar> ppo_loss(nn::Tape<Scalar>& tape, PolicyNet<Scalar>& policy, const PpoBatch<Scalar>& batch,
                              const PpoConfig& cfg) {
  const bool wa = policy.config().weight_aware;
  auto heads = policy.forward(tape, tape.constant(batch.observations));
  nn::Var<Scalar> label_logp = nn::log_softmax(heads.label_logits);
  nn::Var<Scalar> new_logp = nn::pick(label_logp, std::span<const int>(batch.labels));
  nn::Var<Scalar> entropy_rows = nn::scale(nn::row_sum(nn::mul(nn::exp(label_logp), label_logp)), Scalar(-1));
  if (wa) {
    if (batch.weight_indices.size() != batch.labels.size()) {
      throw DimensionError("ppo: weight-aware batch is missing weight actions");
    }
    nn::Var<Scalar> weight_logp = nn::log_softmax(*heads.weight_logits);
    new_logp = nn::add(new_logp, nn::pick(weight_logp, std::span<const int>(batch.weight_indices)));
    entropy_rows = nn::add(entropy_rows,
                           nn::scale(nn::row_sum(nn::mul(nn::exp(weight_logp), weight_logp)), Scalar(-1)));
  }
  nn::Var<Scalar> ratio = nn::exp(nn::sub(new_logp, tape.constant(batch.old_log_probs)));
  nn::Var<Scalar> adv = tape.constant(batch.advantages);
  const auto eps = static_cast<Scalar>(cfg.clip_epsilon);
  nn::Var<Scalar> unclipped = nn::mul(ratio, adv);
  nn::Var<Scalar> clipped = nn::mul(nn::clamp(ratio, Scalar(1) - eps, Scalar(1) + eps), adv);
  nn::Var<Scalar> surrogate = nn::mean(nn::minimum(unclipped, clipped));
  nn::Var<Scalar> entropy = nn::mean(entropy_rows);
  nn::Var<Scalar> value_loss = nn::mean(nn::square(nn::sub(heads.values, tape.constant(batch.returns))));
  nn::Var<Scalar> loss = nn::add(nn::scale(surrogate, Scalar(-1)),
                                 nn::add(nn::scale(entropy, static_cast<Scalar>(-cfg.entropy_coef)),
                                         nn::scale(value_loss, static_cast<Scalar>(cfg.value_coef))));
  return {loss, ratio, surrogate, entropy, value_loss};
}

struct GaeResult {
  std::vector<double> advantages;  // raw GAE
  std::vector<double> normalized;  // zero mean, unit variance
  std::vector<double> returns;     // advantages + values
};

/// Generalized advantage estimation; bootstraps 0 after terminal steps and
/// after the final step.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                      double gamma, double lambda);

/// (a − mean)/std; a buffer with std below 1e-8 is only centred.
std::vector<double> normalize_advantages(std::span<const double> advantages);

class RolloutBuffer {
 public:
  void add(const nn::RowVector<float>& observation, int label, std::optional<int> weight_index, double log_prob,
           double value, double reward, bool done);

  /// Computes advantages and returns; the last transition must end an episode.
  const GaeResult& finish(const PpoConfig& cfg);
  bool finished() const { return finished_; }
  void clear();

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& log_probs() const { return log_probs_; }
  const GaeResult& gae() const;

  PpoBatch<float> batch(std::span<const std::size_t> indices, bool weight_aware) const;

 private:
  std::vector<nn::RowVector<float>> observations_;
  std::vector<int> labels_;
  std::vector<int> weight_indices_;
  std::vector<double> log_probs_, values_, rewards_;
  std::vector<std::uint8_t> dones_;
  GaeResult gae_;
  bool finished_ = false;
};

struct ActResult {
  ActionMsg action;
  double log_prob = 0.0;  // joint over label and weight factors
  double value = 0.0;
  nn::RowVector<float> observation;
};

struct PpoStats {
  double surrogate = 0.0;     // mean clipped objective over all minibatches
  double clip_fraction = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  // First minibatch of the first pass, before any parameter moves.
  double initial_max_ratio_deviation = 0.0;
  double initial_surrogate = 0.0;
  double initial_mean_advantage = 0.0;
  int optimizer_steps = 0;
};

class PpoAgent {
 public:
  PpoAgent(const PolicyNetConfig& net_cfg, const PpoConfig& cfg, std::uint64_t seed);

  /// Stochastic: sample each factor; deterministic: argmax per factor. The
  /// action carries the ψ-way label distribution expanded into the K-wide
  /// auxiliary space (zeros outside the sample's block).
  ActResult act(const Observation& obs, bool stochastic);

  /// Clipped-PPO passes over the finished buffer; clears it afterwards.
  PpoStats update(RolloutBuffer& buffer);

  PolicyNet<float>& policy() { return policy_; }
  const PolicyNet<float>& policy() const { return policy_; }
  const PpoConfig& config() const { return cfg_; }

  Snapshot snapshot(int epoch = 0) const;
  void restore(const Snapshot& snap);

 private:
  PolicyNet<float> policy_;
  PpoConfig cfg_;
  nn::Adam<float> opt_;
  std::mt19937_64 rng_;
};

/// Mean joint entropy of the policy over a set of observation rows.
double policy_entropy(const PolicyNet<float>& policy, const nn::MatrixF& observations);

}  // namespace rlaux
