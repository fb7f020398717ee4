#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "rlaux/env.hpp"

using namespace rlaux;
using namespace rlaux::nn;

namespace {

constexpr int kC = 3, kPsi = 2, kDim = 4;

data::Dataset make_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<float> values(n * kDim);
  for (float& v : values) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  data::Dataset ds;
  ds.inputs = Tensor({n, static_cast<std::size_t>(kDim)}, std::move(values));
  ds.primary_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.primary_labels[i] = static_cast<int>(i % kC);
  ds.num_primary = kC;
  ds.split = "train";
  return ds;
}

DualHeadNet<float> make_net(std::uint64_t seed = 1) {
  MainNetConfig cfg;
  cfg.input_dim = kDim;
  cfg.extractor_hidden = {6};
  cfg.feature_dim = 5;
  cfg.head_hidden = 8;
  cfg.hierarchy = HierarchyConfig(kC, kPsi);
  return DualHeadNet<float>(cfg, seed);
}

EnvConfig env_config(std::size_t bt, std::size_t br) {
  EnvConfig cfg;
  cfg.train_batch_size = bt;
  cfg.eval_batch_size = br;
  cfg.entropy_source = EntropySource::EmpiricalActions;
  cfg.seed = 42;
  return cfg;
}

nn::SgdConfig sgd(double lr = 0.1) { return nn::SgdConfig{lr, 0.0, 50, 0.5}; }

ActionMsg action_for(const Observation& obs) { return ActionMsg{static_cast<int>(obs.sample_id % kPsi), {}, {}}; }

struct EpisodeLog {
  std::vector<double> rewards;
  std::vector<std::size_t> reward_steps;
  std::vector<std::size_t> ids;
  std::size_t train_events = 0;
};

EpisodeLog run_episode(AuxLabelEnv& env, TrainingMode mode) {
  EpisodeLog log;
  Observation obs = env.reset(mode);
  for (std::size_t step = 1;; ++step) {
    log.ids.push_back(obs.sample_id);
    StepResult r = env.step(action_for(obs));
    if (r.info.count("reward")) {
      log.reward_steps.push_back(step);
      log.rewards.push_back(r.reward);
    } else {
      EXPECT_EQ(r.reward, 0.0);
    }
    if (r.info.count("train_loss")) ++log.train_events;
    if (r.episode_done) {
      EXPECT_FALSE(r.observation.has_value());
      break;
    }
    obs = *r.observation;
  }
  return log;
}

}  // namespace

TEST(Env, RewardCadence) {
  const auto ds = make_dataset(12, 1);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(4, 6));
  const auto log = run_episode(env, TrainingMode::TrainAgent);
  EXPECT_EQ(log.reward_steps, (std::vector<std::size_t>{4, 8, 12}));
  EXPECT_EQ(log.ids.size(), 12u);
}

TEST(Env, EpisodeLengthAndRewardEventsAtDefaultBatch) {
  const auto ds = make_dataset(500, 2);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(100, 256));
  const auto log = run_episode(env, TrainingMode::TrainAgent);
  EXPECT_EQ(log.ids.size(), 500u);
  EXPECT_EQ(log.reward_steps.size(), 5u);
}

TEST(Env, TailBatchTrainsWithoutReward) {
  const auto ds = make_dataset(10, 3);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(4, 5));
  const auto log = run_episode(env, TrainingMode::TrainAgent);
  EXPECT_EQ(log.reward_steps.size(), 2u);
  EXPECT_EQ(log.train_events, 3u);
}

TEST(Env, EverySampleObservedOnce) {
  const auto ds = make_dataset(37, 4);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(5, 10));
  for (int episode = 0; episode < 3; ++episode) {
    const auto log = run_episode(env, TrainingMode::TrainAgent);
    std::set<std::size_t> unique(log.ids.begin(), log.ids.end());
    EXPECT_EQ(unique.size(), 37u);
    EXPECT_EQ(log.ids.size(), 37u);
    env.end_episode();
  }
}

TEST(Env, SameSeedSameTrace) {
  const auto ds = make_dataset(24, 5);
  AuxLabelEnv a(ds, make_net(), sgd(), env_config(6, 8)), b(ds, make_net(), sgd(), env_config(6, 8));
  EXPECT_EQ(a.reset(TrainingMode::TrainAgent).sample_id, b.reset(TrainingMode::TrainAgent).sample_id);
  const auto la = run_episode(a, TrainingMode::TrainMain), lb = run_episode(b, TrainingMode::TrainMain);
  EXPECT_EQ(la.ids, lb.ids);
  a.end_episode();
  b.end_episode();
  EXPECT_EQ(a.canonical_hash(), b.canonical_hash());
  const auto ra = run_episode(a, TrainingMode::TrainAgent), rb = run_episode(b, TrainingMode::TrainAgent);
  EXPECT_EQ(ra.rewards, rb.rewards);
}

TEST(Env, TrainAgentRevertsToCanonical) {
  const auto ds = make_dataset(20, 6);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(5, 5));
  const auto canonical = env.canonical_hash();
  run_episode(env, TrainingMode::TrainAgent);
  EXPECT_NE(parameter_hash(env.main_net()), canonical);
  env.end_episode();
  EXPECT_EQ(parameter_hash(env.main_net()), canonical);
  EXPECT_EQ(env.canonical_hash(), canonical);
  EXPECT_EQ(env.main_epoch(), 0);
}

TEST(Env, TrainMainPersistsAndAdvancesEpoch) {
  const auto ds = make_dataset(20, 7);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(5, 5));
  const auto canonical = env.canonical_hash();
  const auto log = run_episode(env, TrainingMode::TrainMain);
  EXPECT_TRUE(log.reward_steps.empty());
  env.end_episode();
  EXPECT_NE(env.canonical_hash(), canonical);
  EXPECT_EQ(parameter_hash(env.main_net()), env.canonical_hash());
  EXPECT_EQ(env.main_epoch(), 1);
  EXPECT_EQ(env.canonical().epoch, 1);
}

TEST(Env, TrainMainWithZeroLearningRateKeepsHash) {
  const auto ds = make_dataset(20, 8);
  AuxLabelEnv env(ds, make_net(), sgd(0.0), env_config(5, 5));
  const auto canonical = env.canonical_hash();
  run_episode(env, TrainingMode::TrainMain);
  env.end_episode();
  EXPECT_EQ(env.canonical_hash(), canonical);
}

TEST(Env, BatchResetRestoresAfterEveryBoundary) {
  const auto ds = make_dataset(20, 9);
  EnvConfig cfg = env_config(5, 5);
  cfg.reset_granularity = ResetGranularity::Batch;
  AuxLabelEnv env(ds, make_net(), sgd(), cfg);
  const auto canonical = env.canonical_hash();
  Observation obs = env.reset(TrainingMode::TrainAgent);
  int boundaries = 0;
  for (;;) {
    StepResult r = env.step(action_for(obs));
    if (r.info.count("train_loss")) {
      ++boundaries;
      EXPECT_EQ(parameter_hash(env.main_net()), canonical);
    }
    if (r.episode_done) break;
    obs = *r.observation;
  }
  EXPECT_EQ(boundaries, 4);
  env.end_episode();
  EXPECT_EQ(parameter_hash(env.main_net()), canonical);
}

TEST(Env, ResetDiscardsPartialEpisode) {
  const auto ds = make_dataset(20, 10);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(5, 5));
  const auto canonical = env.canonical_hash();
  Observation obs = env.reset(TrainingMode::TrainMain);
  for (int i = 0; i < 7; ++i) obs = *env.step(action_for(obs)).observation;
  EXPECT_NE(parameter_hash(env.main_net()), canonical);
  env.reset(TrainingMode::TrainAgent);
  EXPECT_EQ(parameter_hash(env.main_net()), canonical);
  EXPECT_EQ(env.steps_taken(), 0u);
  const auto log = run_episode(env, TrainingMode::TrainAgent);
  EXPECT_EQ(log.reward_steps, (std::vector<std::size_t>{5, 10, 15, 20}));
}

TEST(Env, ProtocolErrors) {
  const auto ds = make_dataset(8, 11);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(4, 4));
  EXPECT_THROW(env.step(ActionMsg{}), ProtocolError);
  Observation obs = env.reset(TrainingMode::TrainAgent);
  EXPECT_THROW(env.end_episode(), ProtocolError);
  for (;;) {
    StepResult r = env.step(action_for(obs));
    if (r.episode_done) break;
    obs = *r.observation;
  }
  EXPECT_THROW(env.step(ActionMsg{}), ProtocolError);
  env.end_episode();
  EXPECT_THROW(env.end_episode(), ProtocolError);
}

TEST(Env, ActionErrors) {
  const auto ds = make_dataset(8, 12);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(4, 4));
  env.reset(TrainingMode::TrainAgent);
  EXPECT_THROW(env.step(ActionMsg{kPsi, {}, {}}), ActionError);
  EXPECT_THROW(env.step(ActionMsg{-1, {}, {}}), ActionError);
  EXPECT_THROW(env.step(ActionMsg{0, 3, {}}), ActionError);
  EXPECT_THROW(env.step(ActionMsg{0, {}, VectorF::Zero(kC * kPsi - 1)}), ActionError);
  EXPECT_THROW(env.step(ActionMsg{0, {}, VectorF::Constant(kC * kPsi, 0.5f)}), ActionError);
  EXPECT_EQ(env.steps_taken(), 0u);

  EnvConfig wa = env_config(4, 4);
  wa.weight_aware = true;
  AuxLabelEnv wenv(ds, make_net(), sgd(), wa);
  wenv.reset(TrainingMode::TrainAgent);
  EXPECT_THROW(wenv.step(ActionMsg{0, {}, {}}), ActionError);
  EXPECT_THROW(wenv.step(ActionMsg{0, 21, {}}), ActionError);
  EXPECT_NO_THROW(wenv.step(ActionMsg{0, 20, {}}));

  EnvConfig probs = env_config(4, 4);
  probs.entropy_source = EntropySource::PolicyProbs;
  AuxLabelEnv penv(ds, make_net(), sgd(), probs);
  penv.reset(TrainingMode::TrainAgent);
  EXPECT_THROW(penv.step(ActionMsg{0, {}, {}}), ActionError);
}

TEST(Env, ConfigErrors) {
  const auto ds = make_dataset(8, 13);
  EXPECT_THROW(AuxLabelEnv(ds, make_net(), sgd(), env_config(9, 4)), ConfigError);
  EXPECT_THROW(AuxLabelEnv(ds, make_net(), sgd(), env_config(4, 9)), ConfigError);
  EXPECT_THROW(AuxLabelEnv(ds, make_net(), sgd(), env_config(0, 4)), ConfigError);
  const data::Dataset empty;
  EXPECT_THROW(AuxLabelEnv(empty, make_net(), sgd(), env_config(1, 1)), ConfigError);
}

TEST(Env, GlobalLabelsAlwaysInsideBlock) {
  const auto ds = make_dataset(30, 14);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(10, 10));
  std::ostringstream trace;
  env.set_trace(&trace);
  std::mt19937_64 rng(14);
  Observation obs = env.reset(TrainingMode::TrainAgent);
  for (;;) {
    StepResult r = env.step(ActionMsg{static_cast<int>(rng() % kPsi), {}, {}});
    if (r.episode_done) break;
    obs = *r.observation;
  }
  std::istringstream lines(trace.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    ++count;
    const auto field = [&](const std::string& key) {
      const auto at = line.find(key + "=");
      return std::stoi(line.substr(at + key.size() + 1));
    };
    const int y = field("primary"), label = field("aux_label");
    EXPECT_TRUE(env.hierarchy().in_block(y, label)) << line;
    EXPECT_NE(line.find("mode=train_agent"), std::string::npos);
  }
  EXPECT_EQ(count, 30);
}

TEST(Env, ProbeEntropy) {
  const auto ds = make_dataset(8, 15);
  AuxLabelEnv empirical(ds, make_net(), sgd(), env_config(4, 4));
  EXPECT_EQ(empirical.probe_entropy({}, {3, 3, 3, 3}), 0.0);
  EXPECT_NEAR(empirical.probe_entropy({}, {0, 1, 2, 3, 4, 5}), std::log(6.0), 1e-12);

  EnvConfig cfg = env_config(4, 4);
  cfg.entropy_source = EntropySource::PolicyProbs;
  AuxLabelEnv policy(ds, make_net(), sgd(), cfg);
  const int k = kC * kPsi;
  std::vector<VectorF> uniform_rows(3, VectorF::Constant(k, 1.0f / static_cast<float>(k)));
  EXPECT_NEAR(policy.probe_entropy(uniform_rows, {}), std::log(static_cast<double>(k)), 1e-6);

  std::vector<VectorF> mixed(2, VectorF::Zero(k));
  mixed[0](0) = 0.5f;
  mixed[0](1) = 0.5f;
  mixed[1](1) = 1.0f;
  const double oracle = -(0.25 * std::log(0.25) + 0.75 * std::log(0.75));
  EXPECT_NEAR(policy.probe_entropy(mixed, {}), oracle, 1e-6);
}

TEST(Env, RewardMatchesEvalLossAndBonus) {
  const auto ds = make_dataset(12, 16);
  AuxLabelEnv env(ds, make_net(), sgd(), env_config(4, 6));
  Observation obs = env.reset(TrainingMode::TrainAgent);
  for (;;) {
    StepResult r = env.step(action_for(obs));
    if (r.info.count("reward")) {
      EXPECT_NEAR(r.reward, -r.info.at("eval_loss") + r.info.at("entropy"), 1e-12);
      EXPECT_GT(r.info.at("eval_loss"), 0.0);
    }
    if (r.episode_done) break;
    obs = *r.observation;
  }
}
