#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "rlaux/ppo.hpp"

using namespace rlaux;
using namespace rlaux::nn;

namespace {

PolicyNetConfig policy_config(int c, int psi, bool weight_aware, int d = 4) {
  PolicyNetConfig cfg;
  cfg.input_dim = d;
  cfg.hierarchy = HierarchyConfig(c, psi);
  cfg.extractor_hidden = {12};
  cfg.feature_dim = 10;
  cfg.weight_aware = weight_aware;
  return cfg;
}

Observation make_obs(std::mt19937_64& rng, int d, int y, std::size_t id = 0) {
  Observation obs;
  obs.sample_id = id;
  obs.x.resize(d);
  for (int i = 0; i < d; ++i) obs.x(i) = static_cast<float>(uniform(rng, -1.0, 1.0));
  obs.primary_label = y;
  return obs;
}

// A_t = Σ_l (γλ)^l δ_{t+l}, truncated at the first terminal step.
std::vector<double> gae_by_sum(const std::vector<double>& r, const std::vector<double>& v,
                               const std::vector<std::uint8_t>& done, double g, double l) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = (t + 1 < n && !done[t]) ? v[t + 1] : 0.0;
    delta[t] = r[t] + g * next - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double coef = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += coef * delta[k];
      if (done[k]) break;
      coef *= g * l;
    }
  }
  return adv;
}

}  // namespace

TEST(ClippedSurrogate, ExampleCases) {
  EXPECT_DOUBLE_EQ(clipped_surrogate_term(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_surrogate_term(0.5, -1.0, 0.2), -0.8);
  EXPECT_DOUBLE_EQ(clipped_surrogate_term(1.0, 0.7, 0.2), 0.7);
  EXPECT_DOUBLE_EQ(clipped_surrogate_term(0.5, 1.0, 0.2), 0.5);
  EXPECT_DOUBLE_EQ(clipped_surrogate_term(1.5, -1.0, 0.2), -1.5);
}

TEST(ClippedSurrogate, LowerBoundProperty) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double r = uniform(rng, 0.0, 3.0), a = uniform(rng, -2.0, 2.0), eps = uniform(rng, 0.05, 0.5);
    const double term = clipped_surrogate_term(r, a, eps);
    const double clipped = std::clamp(r, 1 - eps, 1 + eps) * a;
    EXPECT_LE(term, r * a + 1e-12);
    EXPECT_LE(term, std::max(r * a, clipped) + 1e-12);
    EXPECT_LE(term, r * a + std::abs(a) * eps + 1e-12);
    if (std::abs(r - 1.0) <= eps) {
      EXPECT_DOUBLE_EQ(term, r * a);
    }
  }
}

TEST(Gae, SingleStepIsReward) {
  const std::vector<double> r{2.5}, v{0.0};
  const std::vector<std::uint8_t> d{1};
  const auto out = compute_gae(r, v, d, 1.0, 0.95);
  EXPECT_DOUBLE_EQ(out.advantages[0], 2.5);
  EXPECT_DOUBLE_EQ(out.returns[0], 2.5);
}

TEST(Gae, ThreeStepHandCase) {
  const std::vector<double> r{1.0, 0.0, 2.0}, v{0.5, 0.25, 1.0};
  const std::vector<std::uint8_t> d{0, 0, 1};
  const double g = 0.99, l = 0.95;
  const double d2 = 2.0 - 1.0;
  const double d1 = 0.0 + g * 1.0 - 0.25;
  const double d0 = 1.0 + g * 0.25 - 0.5;
  const auto out = compute_gae(r, v, d, g, l);
  EXPECT_NEAR(out.advantages[2], d2, 1e-12);
  EXPECT_NEAR(out.advantages[1], d1 + g * l * d2, 1e-12);
  EXPECT_NEAR(out.advantages[0], d0 + g * l * d1 + g * l * g * l * d2, 1e-12);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(out.returns[t], out.advantages[t] + v[t], 1e-12);
}

TEST(Gae, MatchesSumFormulaWithTerminals) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = uniform(rng, -1.0, 1.0);
      v[t] = uniform(rng, -1.0, 1.0);
      d[t] = rng() % 7 == 0;
    }
    d.back() = 1;
    const auto out = compute_gae(r, v, d, 0.99, 0.95);
    const auto oracle = gae_by_sum(r, v, d, 0.99, 0.95);
    for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(out.advantages[t], oracle[t], 1e-10);
  }
}

TEST(Gae, ExactValuesGiveZeroAdvantages) {
  const double g = 0.99;
  const std::vector<double> r(5, 1.0);
  std::vector<double> v(5);
  double acc = 0.0;
  for (int t = 4; t >= 0; --t) v[static_cast<std::size_t>(t)] = acc = 1.0 + g * acc;
  const std::vector<std::uint8_t> d{0, 0, 0, 0, 1};
  const auto out = compute_gae(r, v, d, g, 0.95);
  for (double a : out.advantages) EXPECT_NEAR(a, 0.0, 1e-12);
  for (double a : out.normalized) EXPECT_NEAR(a, 0.0, 1e-12);
}

TEST(Gae, Errors) {
  EXPECT_THROW(compute_gae({}, {}, {}, 0.99, 0.95), ProtocolError);
  const std::vector<double> r{1.0, 2.0}, v{0.0};
  const std::vector<std::uint8_t> d{0, 1};
  EXPECT_THROW(compute_gae(r, v, d, 0.99, 0.95), DimensionError);
}

TEST(Advantages, NormalizedToZeroMeanUnitVariance) {
  std::mt19937_64 rng(3);
  std::vector<double> a(64);
  for (double& x : a) x = uniform(rng, -5.0, 9.0);
  const auto n = normalize_advantages(a);
  const double mean = std::accumulate(n.begin(), n.end(), 0.0) / 64.0;
  double var = 0.0;
  for (double x : n) var += (x - mean) * (x - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var / 64.0, 1.0, 1e-6);
  const auto flat = normalize_advantages(std::vector<double>(4, 3.0));
  for (double x : flat) EXPECT_EQ(x, 0.0);
}

TEST(RolloutBuffer, ProtocolErrors) {
  RolloutBuffer buf;
  PpoConfig cfg;
  EXPECT_THROW(buf.finish(cfg), ProtocolError);
  EXPECT_THROW(buf.gae(), ProtocolError);
  const RowVector<float> obs = RowVector<float>::Zero(3);
  buf.add(obs, 0, std::nullopt, -0.5, 0.1, 0.0, false);
  EXPECT_THROW(buf.finish(cfg), ProtocolError);
  EXPECT_THROW(buf.add(RowVector<float>::Zero(4), 0, std::nullopt, -0.5, 0.1, 0.0, true), DimensionError);
  buf.add(obs, 1, std::nullopt, -0.5, 0.1, 1.0, true);
  buf.finish(cfg);
  EXPECT_TRUE(buf.finished());
  EXPECT_THROW(buf.add(obs, 0, std::nullopt, -0.5, 0.1, 0.0, true), ProtocolError);
  const std::vector<std::size_t> idx{0, 1};
  EXPECT_THROW(buf.batch(idx, true), ProtocolError);
  const auto b = buf.batch(idx, false);
  EXPECT_EQ(b.labels, (std::vector<int>{0, 1}));
  buf.clear();
  EXPECT_TRUE(buf.empty());
  EXPECT_FALSE(buf.finished());
}

TEST(PpoConfig, Validation) {
  PpoConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.clip_epsilon = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PpoConfig{};
  cfg.gae_lambda = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PpoConfig{};
  cfg.minibatch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PpoAgent, UniformLogitsGiveUniformSubLabels) {
  PpoAgent agent(policy_config(4, 5, false), PpoConfig{}, 1);
  for (auto* p : agent.policy().parameters()) p->value.setZero();
  std::mt19937_64 rng(1);
  const auto res = agent.act(make_obs(rng, 4, 2), true);
  EXPECT_NEAR(res.log_prob, std::log(0.2), 1e-6);
  ASSERT_TRUE(res.action.probs.has_value());
  const VectorF& p = *res.action.probs;
  EXPECT_EQ(p.size(), 20);
  for (int k = 0; k < 20; ++k) EXPECT_NEAR(p(k), (k >= 10 && k < 15) ? 0.2f : 0.0f, 1e-6f);
}

TEST(PpoAgent, DeterministicActIsIdempotent) {
  PpoAgent agent(policy_config(3, 4, true), PpoConfig{}, 2);
  std::mt19937_64 rng(2);
  const auto obs = make_obs(rng, 4, 1);
  const auto a = agent.act(obs, false), b = agent.act(obs, false);
  EXPECT_EQ(a.action.sub_label, b.action.sub_label);
  EXPECT_EQ(a.action.weight_index, b.action.weight_index);
  EXPECT_EQ(a.log_prob, b.log_prob);
}

TEST(PpoAgent, JointLogProbFactorizes) {
  PpoAgent agent(policy_config(3, 4, true), PpoConfig{}, 3);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto obs = make_obs(rng, 4, i % 3);
    const auto res = agent.act(obs, true);
    const auto heads = agent.policy().forward(res.observation);
    const MatrixD lp = softmax(heads.label_logits.cast<double>());
    const MatrixD wp = softmax(heads.weight_logits.cast<double>());
    ASSERT_TRUE(res.action.weight_index.has_value());
    EXPECT_NEAR(res.log_prob, std::log(lp(0, res.action.sub_label)) + std::log(wp(0, *res.action.weight_index)), 1e-9);
    EXPECT_GE(res.action.sub_label, 0);
    EXPECT_LT(res.action.sub_label, 4);
  }
}

TEST(PpoAgent, EntropyBounds) {
  std::mt19937_64 rng(4);
  for (bool wa : {false, true}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      PpoAgent agent(policy_config(3, 5, wa), PpoConfig{}, seed);
      if (seed % 2 == 1) {
        for (auto* p : agent.policy().parameters()) p->value *= 40.0f;
      }
      MatrixF obs(8, agent.policy().config().observation_dim());
      for (int r = 0; r < 8; ++r) obs.row(r) = agent.policy().encode(make_obs(rng, 4, r % 3).x, r % 3);
      const double h = policy_entropy(agent.policy(), obs);
      const double bound = std::log(5.0) + (wa ? std::log(21.0) : 0.0);
      EXPECT_GE(h, 0.0);
      EXPECT_LE(h, bound + 1e-9);
    }
  }
  PpoAgent flat(policy_config(3, 5, true), PpoConfig{}, 0);
  for (auto* p : flat.policy().parameters()) p->value.setZero();
  MatrixF obs = MatrixF::Zero(2, flat.policy().config().observation_dim());
  EXPECT_NEAR(policy_entropy(flat.policy(), obs), std::log(5.0) + std::log(21.0), 1e-9);
}

TEST(PpoAgent, RatioIsOneAtTheStartOfEveryUpdate) {
  PpoConfig cfg;
  cfg.minibatch_size = 16;
  PpoAgent agent(policy_config(3, 3, true), cfg, 5);
  std::mt19937_64 rng(5);
  for (int round = 0; round < 3; ++round) {
    RolloutBuffer buf;
    for (int t = 0; t < 40; ++t) {
      const auto obs = make_obs(rng, 4, t % 3, static_cast<std::size_t>(t));
      const auto res = agent.act(obs, true);
      const double reward = (t + 1) % 10 == 0 ? uniform(rng, -1.0, 0.0) : 0.0;
      buf.add(res.observation, res.action.sub_label, res.action.weight_index, res.log_prob, res.value, reward, t == 39);
    }
    const auto stats = agent.update(buf);
    EXPECT_LE(stats.initial_max_ratio_deviation, 1e-5);
    EXPECT_NEAR(stats.initial_surrogate, stats.initial_mean_advantage, 1e-5);
    EXPECT_EQ(stats.optimizer_steps, 4 * 3);
    EXPECT_TRUE(buf.empty());
  }
}

TEST(PpoLoss, ZeroAdvantagesLeaveOnlyTheEntropyGradient) {
  PpoConfig cfg;
  PpoAgent agent(policy_config(2, 3, true), cfg, 6);
  PolicyNet<double> policy = agent.policy().cast<double>();
  std::mt19937_64 rng(6);
  PpoBatch<double> batch;
  batch.observations.resize(5, policy.config().observation_dim());
  for (int r = 0; r < 5; ++r) {
    batch.observations.row(r) = policy.encode(make_obs(rng, 4, r % 2).x, r % 2);
    batch.labels.push_back(r % 3);
    batch.weight_indices.push_back((r * 7) % 21);
  }
  const auto heads = policy.forward(batch.observations);
  batch.returns = heads.values;
  batch.advantages = MatrixD::Zero(5, 1);
  batch.old_log_probs = MatrixD::Zero(5, 1);

  auto params = policy.parameters();
  auto grads = [&](bool full) {
    zero_grad<double>(params);
    Tape<double> tape;
    auto terms = ppo_loss(tape, policy, batch, cfg);
    tape.backward(full ? terms.loss : scale(terms.entropy, -cfg.entropy_coef));
    std::vector<MatrixD> out;
    for (auto* p : params) out.push_back(p->grad);
    return out;
  };
  const auto full = grads(true), entropy_only = grads(false);
  for (std::size_t i = 0; i < full.size(); ++i) {
    EXPECT_LE((full[i] - entropy_only[i]).cwiseAbs().maxCoeff(), 1e-12) << params[i]->name;
  }

  PpoConfig no_entropy = cfg;
  no_entropy.entropy_coef = 0.0;
  zero_grad<double>(params);
  Tape<double> tape;
  tape.backward(ppo_loss(tape, policy, batch, no_entropy).loss);
  for (auto* p : params) EXPECT_LE(p->grad.cwiseAbs().maxCoeff(), 1e-12) << p->name;
}

TEST(PpoAgent, LearnsABandit) {
  PpoConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.minibatch_size = 32;
  PpoAgent agent(policy_config(1, 3, false, 2), cfg, 7);
  std::mt19937_64 rng(7);
  Observation obs = make_obs(rng, 2, 0);
  auto p_best = [&] {
    const auto heads = agent.policy().forward(agent.policy().encode(obs.x, 0));
    return softmax(heads.label_logits.cast<double>())(0, 2);
  };
  const double before = p_best();
  for (int round = 0; round < 15; ++round) {
    RolloutBuffer buf;
    for (int t = 0; t < 64; ++t) {
      const auto res = agent.act(obs, true);
      buf.add(res.observation, res.action.sub_label, std::nullopt, res.log_prob, res.value,
              res.action.sub_label == 2 ? 1.0 : 0.0, true);
    }
    agent.update(buf);
  }
  EXPECT_GT(p_best(), before + 0.3);
}

TEST(PpoAgent, SnapshotRoundTrip) {
  PpoAgent agent(policy_config(2, 2, false), PpoConfig{}, 8);
  const Snapshot snap = agent.snapshot(3);
  for (auto* p : agent.policy().parameters()) p->value.array() += 1.0f;
  EXPECT_NE(agent.snapshot(3), snap);
  agent.restore(snap);
  EXPECT_EQ(agent.snapshot(3), snap);
  PpoAgent other(policy_config(2, 3, false), PpoConfig{}, 8);
  EXPECT_THROW(other.restore(snap), CheckpointError);
}
