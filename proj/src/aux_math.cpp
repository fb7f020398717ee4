#include "rlaux/aux_math.hpp"

#include <cmath>
#include <numeric>

namespace rlaux {

Eigen::Array<bool, Eigen::Dynamic, 1> hierarchy_mask(int y, const HierarchyConfig& cfg) {
  cfg.check_label(y);
  Eigen::Array<bool, Eigen::Dynamic, 1> m = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(cfg.num_aux(), false);
  m.segment(cfg.block_begin(y), cfg.hierarchy_factor).setConstant(true);
  return m;
}

double batch_entropy(const Eigen::Ref<const nn::MatrixD>& probs) {
  if (probs.rows() == 0 || probs.cols() == 0) throw DistributionError("batch_entropy: empty batch");
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double s = probs.row(r).sum();
    if (std::abs(s - 1.0) > 1e-5 || (probs.row(r).array() < 0.0).any()) {
      throw DistributionError("batch_entropy: row " + std::to_string(r) + " is not a distribution (sum " +
                              std::to_string(s) + ")");
    }
  }
  const Eigen::RowVectorXd mean = probs.colwise().mean();
  double h = 0.0;
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    if (mean(k) > 0.0) h -= mean(k) * std::log(mean(k));
  }
  return std::max(h, 0.0);
}

double batch_entropy_of_actions(std::span<const int> classes, int num_classes) {
  if (classes.empty()) throw DistributionError("batch_entropy: empty batch");
  if (num_classes <= 0) throw DistributionError("batch_entropy: num_classes must be positive");
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int c : classes) {
    if (c < 0 || c >= num_classes) throw LabelError("batch_entropy: class " + std::to_string(c) + " out of range");
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  const double n = static_cast<double>(classes.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

double scale_weight(double unscaled) {
  if (!(unscaled >= 0.0 && unscaled <= 1.0)) {
    throw DomainError("scale_weight: unscaled weight " + std::to_string(unscaled) + " outside [0, 1]");
  }
  return std::exp2(10.0 * unscaled - 5.0);
}

WeightAction WeightAction::from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw ActionError("weight index " + std::to_string(index) + " outside [0, 20]");
  }
  return WeightAction{index};
}

double per_sample_loss(double primary_loss, double aux_loss, double lambda_i) {
  if (!(lambda_i >= 0.0)) throw DomainError("per_sample_loss: negative auxiliary weight");
  return primary_loss + lambda_i * aux_loss;
}

RewardTerms compute_reward(std::span<const double> eval_primary_losses, double entropy_bonus) {
  if (eval_primary_losses.empty()) throw DomainError("compute_reward: empty evaluation batch");
  const double mean = std::accumulate(eval_primary_losses.begin(), eval_primary_losses.end(), 0.0) /
                      static_cast<double>(eval_primary_losses.size());
  return RewardTerms{mean, entropy_bonus, -mean + entropy_bonus};
}

}  // namespace rlaux
