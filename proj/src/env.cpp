#include "rlaux/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace rlaux {

std::string to_string(TrainingMode mode) {
  return mode == TrainingMode::TrainAgent ? "train_agent" : "train_main";
}

void EnvConfig::validate(std::size_t dataset_size) const {
  if (dataset_size == 0) throw ConfigError("environment: empty dataset");
  if (train_batch_size == 0 || eval_batch_size == 0) throw ConfigError("environment: batch sizes must be positive");
  if (train_batch_size > dataset_size) {
    throw ConfigError("environment: train_batch_size " + std::to_string(train_batch_size) + " exceeds dataset size " +
                      std::to_string(dataset_size));
  }
  if (eval_batch_size > dataset_size) {
    throw ConfigError("environment: eval_batch_size " + std::to_string(eval_batch_size) + " exceeds dataset size " +
                      std::to_string(dataset_size));
  }
  if (!primary_only && !(aux_weight > 0.0)) throw ConfigError("environment: aux_weight must be positive");
  if (!(focal_gamma >= 0.0)) throw ConfigError("environment: focal_gamma must be non-negative");
}

AuxLabelEnv::AuxLabelEnv(const data::Dataset& train, DualHeadNet<float> net, const nn::SgdConfig& sgd,
                         const EnvConfig& cfg)
    : train_(train), net_(std::move(net)), opt_(sgd), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate(train_.size());
  train_.validate();
  if (train_.input_dim() != net_.config().input_dim) {
    throw DimensionError("environment: dataset has " + std::to_string(train_.input_dim()) +
                         " features, main net expects " + std::to_string(net_.config().input_dim));
  }
  if (train_.num_primary != net_.hierarchy().num_primary) {
    throw ConfigError("environment: dataset and main net disagree on the number of primary classes");
  }
  canonical_ = snapshot(net_, 0);
  canonical_hash_ = parameter_hash(canonical_);
}

void AuxLabelEnv::set_canonical(const Snapshot& snap) {
  restore(net_, snap);
  canonical_ = snap;
  canonical_hash_ = parameter_hash(canonical_);
  main_epoch_ = snap.epoch;
  opt_.reset();
}

double AuxLabelEnv::learning_rate() const { return nn::scheduled_lr(opt_.config(), main_epoch_); }

Observation AuxLabelEnv::observation_at(std::size_t position) const {
  const std::size_t id = order_[position];
  return {id, train_.inputs.matrix().row(static_cast<Eigen::Index>(id)), train_.primary_labels[id]};
}

Observation AuxLabelEnv::reset(TrainingMode mode) {
  if (train_.size() == 0) throw ConfigError("environment: reset on an empty dataset");
  order_.resize(train_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  restore(net_, canonical_);
  opt_.reset();
  mode_ = mode;
  active_ = true;
  done_ = false;
  cursor_ = 0;
  batch_index_ = 0;
  pending_ids_.clear();
  pending_labels_.clear();
  pending_weights_.clear();
  pending_probs_.clear();
  return observation_at(0);
}

void AuxLabelEnv::validate_action(const ActionMsg& action, int primary_label) const {
  const auto& h = hierarchy();
  if (action.sub_label < 0 || action.sub_label >= h.hierarchy_factor) {
    throw ActionError("sub_label " + std::to_string(action.sub_label) + " outside [0, " +
                      std::to_string(h.hierarchy_factor) + ")");
  }
  if (cfg_.weight_aware != action.weight_index.has_value()) {
    throw ActionError(cfg_.weight_aware ? "weight-aware environment requires a weight_index"
                                        : "weight_index given to an environment that is not weight-aware");
  }
  if (action.weight_index && (*action.weight_index < 0 || *action.weight_index >= WeightAction::kNumClasses)) {
    throw ActionError("weight_index " + std::to_string(*action.weight_index) + " outside [0, 20]");
  }
  if (action.probs) {
    const auto& p = *action.probs;
    if (p.size() != h.num_aux()) {
      throw ActionError("attached distribution has " + std::to_string(p.size()) + " entries, expected " +
                        std::to_string(h.num_aux()));
    }
    if (!p.allFinite() || (p.array() < 0.0f).any() || std::abs(p.cast<double>().sum() - 1.0) > 1e-4) {
      throw ActionError("attached distribution is not a probability vector");
    }
  }
  if (mode_ == TrainingMode::TrainAgent && cfg_.entropy_source == EntropySource::PolicyProbs && !action.probs) {
    throw ActionError("entropy source is the policy distribution but the action carries none");
  }
  (void)primary_label;
}

StepResult AuxLabelEnv::step(const ActionMsg& action) {
  if (done_) throw ProtocolError("step called after the episode finished; call reset()");
  if (!active_) throw ProtocolError("step called before reset()");
  const std::size_t id = order_[cursor_];
  const int y = train_.primary_labels[id];
  validate_action(action, y);

  const int label = hierarchy().global_aux(y, action.sub_label);
  const double weight =
      cfg_.weight_aware ? WeightAction::from_index(*action.weight_index).scaled() : cfg_.aux_weight;
  pending_ids_.push_back(id);
  pending_labels_.push_back(label);
  pending_weights_.push_back(weight);
  if (action.probs) pending_probs_.push_back(*action.probs);
  ++cursor_;

  StepResult result;
  const bool last = cursor_ == order_.size();
  if (pending_ids_.size() == cfg_.train_batch_size) {
    train_pending(mode_ == TrainingMode::TrainAgent, result);
  } else if (last) {
    // Tail batch: trained, but no reward event.
    train_pending(false, result);
  }
  if (last) {
    done_ = true;
    active_ = false;
    result.episode_done = true;
  } else {
    result.observation = observation_at(cursor_);
  }

  if (trace_ != nullptr) {
    auto info = [&](const char* key) {
      auto it = result.info.find(key);
      return it == result.info.end() ? 0.0 : it->second;
    };
    *trace_ << "step=" << cursor_ << "\tmode=" << to_string(mode_) << "\tsample=" << id << "\tprimary=" << y
            << "\taux_label=" << label << "\tweight=" << weight << "\treward=" << result.reward
            << "\tentropy=" << info("entropy") << "\tloss=" << info("train_loss") << "\n";
  }
  return result;
}

void AuxLabelEnv::train_pending(bool with_reward, StepResult& result) {
  const nn::MatrixF x = train_.gather(pending_ids_);
  const std::vector<int> y = train_.gather_labels(pending_ids_);
  std::optional<AuxTargets> aux;
  if (!cfg_.primary_only) aux = AuxTargets{pending_labels_, pending_weights_};
  const double loss = train_batch(net_, opt_, x, y, aux, main_epoch_, cfg_.focal_gamma);
  result.info["batch_index"] = static_cast<double>(batch_index_);
  result.info["train_loss"] = loss;

  if (with_reward) {
    // Evaluation batch: B_R distinct training samples drawn uniformly.
    std::vector<std::size_t> pool(train_.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg_.eval_batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng_)]);
    }
    pool.resize(cfg_.eval_batch_size);
    const std::vector<double> losses = primary_losses(net_, train_.gather(pool), train_.gather_labels(pool));
    const double entropy = probe_entropy(pending_probs_, pending_labels_);
    const RewardTerms reward = compute_reward(losses, entropy_bonus(entropy, cfg_.entropy_sign));
    result.reward = reward.total;
    result.info["eval_loss"] = reward.mean_primary_loss;
    result.info["entropy"] = entropy;
    result.info["entropy_bonus"] = reward.entropy_bonus;
    result.info["reward"] = reward.total;
  }
  if (mode_ == TrainingMode::TrainAgent && cfg_.reset_granularity == ResetGranularity::Batch) {
    restore(net_, canonical_);
    opt_.reset();
  }
  ++batch_index_;
  pending_ids_.clear();
  pending_labels_.clear();
  pending_weights_.clear();
  pending_probs_.clear();
}

double AuxLabelEnv::probe_entropy(const std::vector<nn::VectorF>& probs, const std::vector<int>& global_labels) const {
  const int k = hierarchy().num_aux();
  if (cfg_.entropy_source == EntropySource::EmpiricalActions) return batch_entropy_of_actions(global_labels, k);
  if (probs.empty()) throw DistributionError("probe_entropy: no policy distributions attached");
  nn::MatrixD rows(static_cast<Eigen::Index>(probs.size()), k);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != k) throw DistributionError("probe_entropy: distribution width mismatch");
    rows.row(static_cast<Eigen::Index>(i)) = probs[i].cast<double>().transpose();
  }
  return batch_entropy(rows);
}

void AuxLabelEnv::end_episode() {
  if (!done_) throw ProtocolError("end_episode called before the episode finished");
  if (mode_ == TrainingMode::TrainAgent) {
    restore(net_, canonical_);
  } else {
    ++main_epoch_;
    canonical_ = snapshot(net_, main_epoch_);
    canonical_hash_ = parameter_hash(canonical_);
  }
  opt_.reset();
  done_ = false;
}

}  // namespace rlaux
