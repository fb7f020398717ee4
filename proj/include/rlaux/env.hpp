#pragma once

// The main network's training loop wrapped as an RL environment. Each step
// exposes one training sample; the agent answers with a sub-label inside the
// sample's hierarchy block (and a weight index in weight-aware mode). Every
// B_T answers the environment trains the main network on the labeled batch,
// draws an evaluation batch of B_R training samples, and pays
// −mean primary loss + entropy bonus.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rlaux/aux_math.hpp"
#include "rlaux/checkpoint.hpp"
#include "rlaux/data/dataset.hpp"
#include "rlaux/main_net.hpp"
#include "rlaux/nn/optim.hpp"

namespace rlaux {

enum class TrainingMode { TrainAgent, TrainMain };
enum class ResetGranularity { Epoch, Batch };
enum class EntropySource { PolicyProbs, EmpiricalActions };

struct EnvConfig {
  std::size_t train_batch_size = 100;  // B_T
  std::size_t eval_batch_size = 256;   // B_R
  double aux_weight = 1.0;             // λ when not weight-aware
  bool weight_aware = false;
  bool primary_only = false;  // single-task training: the auxiliary head is never trained
  ResetGranularity reset_granularity = ResetGranularity::Epoch;
  EntropySign entropy_sign = EntropySign::Diversity;
  EntropySource entropy_source = EntropySource::PolicyProbs;
  double focal_gamma = 2.0;
  std::uint64_t seed = 0;

  void validate(std::size_t dataset_size) const;
};

struct Observation {
  std::size_t sample_id = 0;
  nn::RowVector<float> x;
  int primary_label = 0;
};

struct ActionMsg {
  int sub_label = 0;                    // in [0, ψ)
  std::optional<int> weight_index;      // in [0, 20], iff weight-aware
  std::optional<nn::VectorF> probs;     // K-wide label distribution for the entropy bonus
};

struct StepResult {
  std::optional<Observation> observation;  // empty once the episode is done
  double reward = 0.0;
  bool episode_done = false;
  std::map<std::string, double> info;
};

std::string to_string(TrainingMode mode);

class AuxLabelEnv {
 public:
  AuxLabelEnv(const data::Dataset& train, DualHeadNet<float> net, const nn::SgdConfig& sgd, const EnvConfig& cfg);

  /// Reshuffles the sample order, loads the canonical network and returns the
  /// first observation. Any partially labeled batch is discarded.
  Observation reset(TrainingMode mode);

  StepResult step(const ActionMsg& action);

  /// TrainAgent: the network reverts to the canonical snapshot.
  /// TrainMain: the current weights become canonical and the scheduler epoch advances.
  void end_episode();

  /// Entropy of the batch-mean auxiliary distribution, from attached policy
  /// distributions or from the chosen labels, per the configured source.
  double probe_entropy(const std::vector<nn::VectorF>& probs, const std::vector<int>& global_labels) const;

  const DualHeadNet<float>& main_net() const { return net_; }
  DualHeadNet<float>& main_net() { return net_; }
  const Snapshot& canonical() const { return canonical_; }
  std::uint64_t canonical_hash() const { return canonical_hash_; }
  /// Replaces the canonical model (e.g. when resuming from a checkpoint).
  void set_canonical(const Snapshot& snap);

  const EnvConfig& config() const { return cfg_; }
  const HierarchyConfig& hierarchy() const { return net_.hierarchy(); }
  std::size_t episode_length() const { return train_.size(); }
  std::size_t steps_taken() const { return cursor_; }
  bool episode_active() const { return active_; }
  bool episode_done() const { return done_; }
  std::optional<TrainingMode> mode() const { return active_ || done_ ? std::optional(mode_) : std::nullopt; }
  int main_epoch() const { return main_epoch_; }
  double learning_rate() const;

  /// Structured per-step lines (`key=value` separated by tabs) when set.
  void set_trace(std::ostream* trace) { trace_ = trace; }

 private:
  Observation observation_at(std::size_t position) const;
  void train_pending(bool with_reward, StepResult& result);
  void validate_action(const ActionMsg& action, int primary_label) const;

  const data::Dataset& train_;
  DualHeadNet<float> net_;
  nn::Sgd<float> opt_;
  EnvConfig cfg_;
  std::mt19937_64 rng_;

  Snapshot canonical_;
  std::uint64_t canonical_hash_ = 0;
  int main_epoch_ = 0;

  TrainingMode mode_ = TrainingMode::TrainAgent;
  bool active_ = false;
  bool done_ = false;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t batch_index_ = 0;

  std::vector<std::size_t> pending_ids_;
  std::vector<int> pending_labels_;
  std::vector<double> pending_weights_;
  std::vector<nn::VectorF> pending_probs_;

  std::ostream* trace_ = nullptr;
};

}  // namespace rlaux
