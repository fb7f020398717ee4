#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rlaux/error.hpp"
#include "rlaux/nn/autograd.hpp"

namespace rlaux::nn {

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.0;
  int scheduler_step_epochs = 50;
  double scheduler_gamma = 0.5;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (momentum < 0.0) throw ConfigError("momentum must be non-negative");
    if (scheduler_step_epochs <= 0) throw ConfigError("scheduler_step_epochs must be positive");
    if (!(scheduler_gamma > 0.0 && scheduler_gamma <= 1.0)) throw ConfigError("scheduler_gamma must lie in (0, 1]");
  }
};

/// Step schedule: base · gamma^floor(epoch / step).
inline double scheduled_lr(const SgdConfig& cfg, int epoch) {
  if (epoch < 0) throw DomainError("scheduled_lr: negative epoch");
  return cfg.learning_rate * std::pow(cfg.scheduler_gamma, epoch / cfg.scheduler_step_epochs);
}

/// Plain SGD with optional heavy-ball momentum (v ← μv + g; w ← w − lr·v).
template <typename Scalar>
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const SgdConfig& config() const { return cfg_; }

  void step(std::span<Parameter<Scalar>* const> params, int epoch) {
    const auto lr = static_cast<Scalar>(scheduled_lr(cfg_, epoch));
    if (cfg_.momentum == 0.0) {
      for (auto* p : params) p->value -= lr * p->grad;
      return;
    }
    if (velocity_.size() != params.size()) {
      velocity_.clear();
      for (auto* p : params) velocity_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
    const auto mu = static_cast<Scalar>(cfg_.momentum);
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity_[i] = mu * velocity_[i] + params[i]->grad;
      params[i]->value -= lr * velocity_[i];
    }
  }

  /// Drops momentum buffers (used when weights are restored from a snapshot).
  void reset() { velocity_.clear(); }

 private:
  SgdConfig cfg_;
  std::vector<Matrix<Scalar>> velocity_;
};

/// Adam (Kingma & Ba) with bias correction; the agent's optimizer.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr >= 0.0)) throw ConfigError("adam learning rate must be >= 0");
  }

  void step(std::span<Parameter<Scalar>* const> params) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (auto* p : params) {
        m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      }
      t_ = 0;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    const auto step_size = static_cast<Scalar>(lr_ / bc1);
    const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    const auto sqrt_bc2 = static_cast<Scalar>(std::sqrt(bc2));
    const auto eps = static_cast<Scalar>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& g = params[i]->grad;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
      params[i]->value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() / sqrt_bc2 + eps);
    }
  }

  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix<Scalar>> m_, v_;
};

/// Rescales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <typename Scalar>
double clip_grad_norm(std::span<Parameter<Scalar>* const> params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params) sq += p->grad.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto s = static_cast<Scalar>(max_norm / (norm + 1e-6));
    for (auto* p : params) p->grad *= s;
  }
  return norm;
}

}  // namespace rlaux::nn
