#pragma once

// Closed-form quantities of auxiliary-label learning: the hierarchy mask that
// ties each primary class to a block of ψ auxiliary classes, the masked
// softmax and focal loss on the auxiliary head, the batch entropy bonus, the
// 21-way weight scaling, and the reward the labeling agent receives.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rlaux/error.hpp"
#include "rlaux/nn/autograd.hpp"

namespace rlaux {

struct HierarchyConfig {
  int num_primary = 0;       // C
  int hierarchy_factor = 1;  // ψ

  HierarchyConfig() = default;
  HierarchyConfig(int c, int psi) : num_primary(c), hierarchy_factor(psi) { validate(); }

  int num_aux() const { return num_primary * hierarchy_factor; }  // K
  int block_begin(int y) const { return hierarchy_factor * y; }

  void validate() const {
    if (num_primary <= 0) throw ConfigError("hierarchy: num_primary must be positive");
    if (hierarchy_factor < 1) throw ConfigError("hierarchy: hierarchy_factor must be >= 1");
  }
  void check_label(int y) const {
    if (y < 0 || y >= num_primary) {
      throw LabelError("primary label " + std::to_string(y) + " outside [0, " + std::to_string(num_primary) + ")");
    }
  }
  /// Global auxiliary label from a within-block index.
  int global_aux(int y, int sub_label) const {
    check_label(y);
    if (sub_label < 0 || sub_label >= hierarchy_factor) {
      throw LabelError("sub-label " + std::to_string(sub_label) + " outside [0, " +
                       std::to_string(hierarchy_factor) + ")");
    }
    return block_begin(y) + sub_label;
  }
  bool in_block(int y, int aux) const { return aux >= block_begin(y) && aux < block_begin(y) + hierarchy_factor; }

  bool operator==(const HierarchyConfig&) const = default;
};

/// m_k = 1 iff ψ·y ≤ k < ψ·(y+1).
Eigen::Array<bool, Eigen::Dynamic, 1> hierarchy_mask(int y, const HierarchyConfig& cfg);

/// Softmax over the K logits restricted to y's block. Out-of-block entries are
/// exactly zero regardless of their logits.
template <typename Derived>
nn::Vector<typename Derived::Scalar> masked_softmax(const Eigen::MatrixBase<Derived>& z, int y,
                                                    const HierarchyConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  cfg.check_label(y);
  if (z.size() != cfg.num_aux()) {
    throw DimensionError("masked_softmax: expected " + std::to_string(cfg.num_aux()) + " logits, got " +
                         std::to_string(z.size()));
  }
  const int begin = cfg.block_begin(y), psi = cfg.hierarchy_factor;
  nn::Vector<Scalar> p = nn::Vector<Scalar>::Zero(cfg.num_aux());
  const Scalar m = z.reshaped().segment(begin, psi).maxCoeff();
  Scalar sum(0);
  for (int k = 0; k < psi; ++k) {
    p(begin + k) = std::exp(z.reshaped()(begin + k) - m);
    sum += p(begin + k);
  }
  p.segment(begin, psi) /= sum;
  return p;
}

inline constexpr double kFocalProbFloor = 1e-8;

/// −(1 − p_t)^γ · log(p_t), p_t = max(p[target], 1e-8). The target must sit in
/// y's block.
template <typename Derived>
typename Derived::Scalar focal_loss(const Eigen::MatrixBase<Derived>& p, int target, int y,
                                    const HierarchyConfig& cfg, double gamma) {
  using Scalar = typename Derived::Scalar;
  cfg.check_label(y);
  if (target < 0 || target >= cfg.num_aux()) {
    throw LabelError("focal_loss: auxiliary target " + std::to_string(target) + " outside [0, " +
                     std::to_string(cfg.num_aux()) + ")");
  }
  if (!cfg.in_block(y, target)) {
    throw LabelError("focal_loss: auxiliary target " + std::to_string(target) + " is masked out for primary label " +
                     std::to_string(y));
  }
  const Scalar pt = std::max(p.reshaped()(target), static_cast<Scalar>(kFocalProbFloor));
  return -std::pow(Scalar(1) - pt, static_cast<Scalar>(gamma)) * std::log(pt);
}

/// Tape op: per-sample masked focal loss of aux-head logits, B×K → B×1.
template <typename Scalar>
nn::Var<Scalar> masked_focal_per_sample(nn::Var<Scalar> logits, std::span<const int> primary,
                                        std::span<const int> aux_targets, const HierarchyConfig& cfg,
                                        double gamma) {
  const auto& z = logits.value();
  const auto rows = z.rows();
  if (z.cols() != cfg.num_aux()) {
    throw DimensionError("masked_focal: expected " + std::to_string(cfg.num_aux()) + " columns, got " +
                         std::to_string(z.cols()));
  }
  if (static_cast<Eigen::Index>(primary.size()) != rows || static_cast<Eigen::Index>(aux_targets.size()) != rows) {
    throw DimensionError("masked_focal: label count does not match batch size");
  }
  const auto g = static_cast<Scalar>(gamma);
  const auto floor = static_cast<Scalar>(kFocalProbFloor);
  nn::Matrix<Scalar> out(rows, 1);
  // d(loss_b)/d(z_b), zero outside the block.
  nn::Matrix<Scalar> dz = nn::Matrix<Scalar>::Zero(rows, z.cols());
  std::uint64_t clamp_bits = 0xcbf29ce484222325ULL;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int y = primary[static_cast<std::size_t>(r)];
    const int t = aux_targets[static_cast<std::size_t>(r)];
    nn::Vector<Scalar> p = masked_softmax(z.row(r).transpose(), y, cfg);
    out(r, 0) = focal_loss(p, t, y, cfg, gamma);
    const Scalar pt_raw = p(t);
    const bool clamped = pt_raw < floor;
    clamp_bits = (clamp_bits ^ static_cast<std::uint64_t>(clamped)) * 0x100000001b3ULL;
    if (clamped) continue;
    const Scalar pt = pt_raw;
    const Scalar one_minus = Scalar(1) - pt;
    // dL/dp_t = γ(1−p_t)^(γ−1)·log p_t − (1−p_t)^γ / p_t
    Scalar dl_dpt = -std::pow(one_minus, g) / pt;
    if (g != Scalar(0) && one_minus > Scalar(0)) dl_dpt += g * std::pow(one_minus, g - Scalar(1)) * std::log(pt);
    const int begin = cfg.block_begin(y);
    for (int k = 0; k < cfg.hierarchy_factor; ++k) {
      const int col = begin + k;
      const Scalar dpt_dz = pt * ((col == t ? Scalar(1) : Scalar(0)) - p(col));
      dz(r, col) = dl_dpt * dpt_dz;
    }
  }
  if (logits.tape->tracking_branches()) logits.tape->note_branches(clamp_bits);
  return logits.tape->record(std::move(out), {logits}, [dz = std::move(dz)](nn::Tape<Scalar>& tape, std::size_t self) {
    nn::Matrix<Scalar> gin = dz;
    gin.array().colwise() *= tape.grad(self).col(0).array();
    tape.accumulate(tape.input(self, 0), gin);
  });
}

/// H = −Σ_k p̄_k log p̄_k of the batch-mean distribution p̄ (0·log 0 := 0).
/// Every row must sum to 1 within 1e-5.
double batch_entropy(const Eigen::Ref<const nn::MatrixD>& probs);

/// Same, for one-hot rows given by class indices over `num_classes`.
double batch_entropy_of_actions(std::span<const int> classes, int num_classes);

enum class EntropySign {
  Diversity,     // bonus = +H, rewards spreading labels over the auxiliary space
  Literal,       // bonus = Σ p̄ log p̄ = −H
};

inline double entropy_bonus(double entropy, EntropySign sign) {
  return sign == EntropySign::Diversity ? entropy : -entropy;
}

/// 2^(10·w_u − 5) for w_u ∈ [0, 1].
double scale_weight(double unscaled);

struct WeightAction {
  static constexpr int kNumClasses = 21;

  int index = 10;

  static WeightAction from_index(int index);
  double unscaled() const { return static_cast<double>(index) / 20.0; }
  double scaled() const { return scale_weight(unscaled()); }
};

/// primary + λ_i · aux. λ_i = 0 switches the auxiliary term off.
double per_sample_loss(double primary_loss, double aux_loss, double lambda_i);

struct RewardTerms {
  double mean_primary_loss = 0.0;
  double entropy_bonus = 0.0;
  double total = 0.0;
};

/// total = −mean(eval_primary_losses) + entropy_bonus.
RewardTerms compute_reward(std::span<const double> eval_primary_losses, double entropy_bonus);

}  // namespace rlaux
