#include "rlaux/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rlaux {

void PpoConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("ppo: learning_rate must be >= 0");
  if (!(entropy_coef >= 0.0)) throw ConfigError("ppo: entropy_coef must be >= 0");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("ppo: clip_epsilon must lie in (0, 1)");
  if (!(gae_gamma >= 0.0 && gae_gamma <= 1.0)) throw ConfigError("ppo: gae_gamma must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
  if (update_epochs <= 0) throw ConfigError("ppo: update_epochs must be positive");
  if (minibatch_size <= 0) throw ConfigError("ppo: minibatch_size must be positive");
  if (!(value_coef >= 0.0)) throw ConfigError("ppo: value_coef must be >= 0");
}

void PolicyNetConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("policy: input_dim must be positive");
  if (feature_dim <= 0) throw ConfigError("policy: feature_dim must be positive");
  for (int h : extractor_hidden) {
    if (h <= 0) throw ConfigError("policy: extractor widths must be positive");
  }
  hierarchy.validate();
}

std::string PolicyNetConfig::describe() const {
  std::ostringstream os;
  os << "policy input=" << input_dim << " extractor=";
  for (std::size_t i = 0; i < extractor_hidden.size(); ++i) os << (i ? "," : "") << extractor_hidden[i];
  os << " feature=" << feature_dim << " C=" << hierarchy.num_primary << " psi=" << hierarchy.hierarchy_factor
     << " weight_aware=" << (weight_aware ? 1 : 0);
  return os.str();
}

double clipped_surrogate_term(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                      double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (n == 0) throw ProtocolError("compute_gae: empty rollout");
  if (values.size() != n || dones.size() != n) throw DimensionError("compute_gae: length mismatch");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double nonterminal = dones[t] != 0 ? 0.0 : 1.0;
    const double next_value = t + 1 < n ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_value * nonterminal - values[t];
    next_adv = delta + gamma * lambda * nonterminal * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
  }
  out.normalized = normalize_advantages(out.advantages);
  return out;
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / n);
  std::vector<double> out;
  out.reserve(advantages.size());
  for (double a : advantages) out.push_back(stddev < 1e-8 ? a - mean : (a - mean) / (stddev + 1e-8));
  return out;
}

void RolloutBuffer::add(const nn::RowVector<float>& observation, int label, std::optional<int> weight_index,
                        double log_prob, double value, double reward, bool done) {
  if (finished_) throw ProtocolError("rollout buffer: add after finish; clear it first");
  if (!observations_.empty() && observations_.front().size() != observation.size()) {
    throw DimensionError("rollout buffer: observation width changed");
  }
  observations_.push_back(observation);
  labels_.push_back(label);
  weight_indices_.push_back(weight_index.value_or(-1));
  log_probs_.push_back(log_prob);
  values_.push_back(value);
  rewards_.push_back(reward);
  dones_.push_back(done);
}

const GaeResult& RolloutBuffer::finish(const PpoConfig& cfg) {
  if (empty()) throw ProtocolError("rollout buffer: finish on an empty buffer");
  if (!dones_.back()) throw ProtocolError("rollout buffer: advantages need a completed episode");
  gae_ = compute_gae(rewards_, values_, dones_, cfg.gae_gamma, cfg.gae_lambda);
  finished_ = true;
  return gae_;
}

const GaeResult& RolloutBuffer::gae() const {
  if (!finished_) throw ProtocolError("rollout buffer: advantages not computed yet");
  return gae_;
}

void RolloutBuffer::clear() {
  observations_.clear();
  labels_.clear();
  weight_indices_.clear();
  log_probs_.clear();
  values_.clear();
  rewards_.clear();
  dones_.clear();
  gae_ = {};
  finished_ = false;
}

PpoBatch<float> RolloutBuffer::batch(std::span<const std::size_t> indices, bool weight_aware) const {
  const auto& g = gae();
  const auto n = static_cast<Eigen::Index>(indices.size());
  PpoBatch<float> b;
  b.observations.resize(n, observations_.front().size());
  b.old_log_probs.resize(n, 1);
  b.advantages.resize(n, 1);
  b.returns.resize(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = indices[static_cast<std::size_t>(r)];
    b.observations.row(r) = observations_.at(i);
    b.labels.push_back(labels_[i]);
    if (weight_aware) {
      if (weight_indices_[i] < 0) throw ProtocolError("rollout buffer: transition has no weight action");
      b.weight_indices.push_back(weight_indices_[i]);
    }
    b.old_log_probs(r, 0) = static_cast<float>(log_probs_[i]);
    b.advantages(r, 0) = static_cast<float>(g.normalized[i]);
    b.returns(r, 0) = static_cast<float>(g.returns[i]);
  }
  return b;
}

namespace {

int sample_categorical(const Eigen::RowVectorXd& probs, std::mt19937_64& rng) {
  const double u = nn::uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    acc += probs(k);
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size() - 1);
}

Eigen::RowVectorXd softmax_row(const nn::MatrixF& logits) {
  const Eigen::RowVectorXd z = logits.row(0).cast<double>();
  Eigen::RowVectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

int argmax(const Eigen::RowVectorXd& p) {
  Eigen::Index k = 0;
  p.maxCoeff(&k);
  return static_cast<int>(k);
}

}  // namespace

PpoAgent::PpoAgent(const PolicyNetConfig& net_cfg, const PpoConfig& cfg, std::uint64_t seed)
    : policy_(net_cfg, seed), cfg_(cfg), opt_(cfg.learning_rate), rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
}

ActResult PpoAgent::act(const Observation& obs, bool stochastic) {
  const auto& h = policy_.config().hierarchy;
  ActResult out;
  out.observation = policy_.encode(obs.x, obs.primary_label);
  const auto heads = policy_.forward(out.observation);
  const Eigen::RowVectorXd label_p = softmax_row(heads.label_logits);
  const int label = stochastic ? sample_categorical(label_p, rng_) : argmax(label_p);
  out.action.sub_label = label;
  out.log_prob = std::log(std::max(label_p(label), 1e-300));
  if (policy_.config().weight_aware) {
    const Eigen::RowVectorXd weight_p = softmax_row(heads.weight_logits);
    const int w = stochastic ? sample_categorical(weight_p, rng_) : argmax(weight_p);
    out.action.weight_index = w;
    out.log_prob += std::log(std::max(weight_p(w), 1e-300));
  }
  out.value = static_cast<double>(heads.values(0, 0));
  nn::VectorF expanded = nn::VectorF::Zero(h.num_aux());
  expanded.segment(h.block_begin(obs.primary_label), h.hierarchy_factor) = label_p.transpose().cast<float>();
  out.action.probs = std::move(expanded);
  return out;
}

PpoStats PpoAgent::update(RolloutBuffer& buffer) {
  if (!buffer.finished()) buffer.finish(cfg_);
  const bool wa = policy_.config().weight_aware;
  const std::size_t n = buffer.size();
  const auto mb = static_cast<std::size_t>(cfg_.minibatch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  PpoStats stats;
  double clip_hits = 0.0, samples = 0.0;
  auto params = policy_.parameters();
  const double eps = cfg_.clip_epsilon;
  for (int epoch = 0; epoch < cfg_.update_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      const PpoBatch<float> batch = buffer.batch(std::span(order).subspan(start, end - start), wa);
      nn::zero_grad<float>(params);
      nn::Tape<float> tape;
      const PpoLossTerms<float> terms = ppo_loss(tape, policy_, batch, cfg_);
      const auto& ratio = terms.ratio.value();
      if (stats.optimizer_steps == 0) {
        stats.initial_max_ratio_deviation = (ratio.array() - 1.0f).abs().maxCoeff();
        stats.initial_surrogate = terms.surrogate.value()(0, 0);
        stats.initial_mean_advantage = batch.advantages.cast<double>().mean();
      }
      const double rows = static_cast<double>(ratio.rows());
      clip_hits += ((ratio.array() - 1.0f).abs() > static_cast<float>(eps)).count();
      samples += rows;
      stats.surrogate += terms.surrogate.value()(0, 0) * rows;
      stats.entropy += terms.entropy.value()(0, 0) * rows;
      stats.value_loss += terms.value_loss.value()(0, 0) * rows;
      // KL(old‖new) ≈ mean((r − 1) − log r)
      stats.approx_kl += ((ratio.array() - 1.0f) - ratio.array().log()).cast<double>().sum();
      tape.backward(terms.loss);
      if (cfg_.max_grad_norm > 0.0) nn::clip_grad_norm<float>(params, cfg_.max_grad_norm);
      opt_.step(params);
      ++stats.optimizer_steps;
    }
  }
  if (samples > 0) {
    stats.surrogate /= samples;
    stats.entropy /= samples;
    stats.value_loss /= samples;
    stats.approx_kl /= samples;
    stats.clip_fraction = clip_hits / samples;
  }
  buffer.clear();
  return stats;
}

Snapshot PpoAgent::snapshot(int epoch) const {
  const auto params = policy_.parameters();
  return snapshot_parameters(params, epoch);
}

void PpoAgent::restore(const Snapshot& snap) {
  auto params = policy_.parameters();
  restore_parameters(params, snap);
}

double policy_entropy(const PolicyNet<float>& policy, const nn::MatrixF& observations) {
  const auto heads = policy.forward(observations);
  auto row_entropy = [](const nn::MatrixF& logits) {
    const nn::MatrixD p = nn::softmax(logits.cast<double>());
    Eigen::VectorXd h = Eigen::VectorXd::Zero(p.rows());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index k = 0; k < p.cols(); ++k) {
        if (p(r, k) > 0.0) h(r) -= p(r, k) * std::log(p(r, k));
      }
    }
    return h;
  };
  Eigen::VectorXd h = row_entropy(heads.label_logits);
  if (policy.config().weight_aware) h += row_entropy(heads.weight_logits);
  return h.mean();
}

}  // namespace rlaux
