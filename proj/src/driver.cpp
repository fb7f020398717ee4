#include "rlaux/driver.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rlaux/checkpoint.hpp"
#include "rlaux/data/cifar.hpp"
#include "rlaux/data/synthetic.hpp"
#include "rlaux/data/tensor_file.hpp"
#include "rlaux/env.hpp"
#include "rlaux/error.hpp"
#include "rlaux/ppo.hpp"

#ifndef RLAUX_GIT_DESCRIBE
#define RLAUX_GIT_DESCRIBE ""
#endif

namespace rlaux {

namespace {

constexpr std::size_t kEvalBatch = 512;

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << 100.0 * v;
  return os.str();
}

MainNetConfig main_net_config(const ExperimentConfig& cfg, const DataSplits& data) {
  MainNetConfig m;
  m.input_dim = data.train.input_dim();
  m.extractor_hidden = cfg.extractor_hidden;
  m.feature_dim = cfg.feature_dim;
  m.head_hidden = cfg.head_hidden;
  m.hierarchy = HierarchyConfig(data.train.num_primary, cfg.hierarchy_factor);
  return m;
}

EnvConfig env_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  EnvConfig e = cfg.env;
  e.weight_aware = cfg.method == Method::WaRlAux;
  e.primary_only = cfg.method == Method::SingleTask;
  e.seed = derive_seed(seed, "env");
  return e;
}

void check_data(const ExperimentConfig& cfg, const DataSplits& data) {
  data.train.validate();
  data.test.validate();
  if (data.train.input_dim() != data.test.input_dim() || data.train.num_primary != data.test.num_primary) {
    throw ConfigError("train and test splits disagree on input width or class count");
  }
  if (cfg.method == Method::OracleAux) {
    if (!data.train.subclass_labels) throw ConfigError("oracle_aux needs subclass labels in the training data");
    if (data.train.hierarchy_factor != cfg.hierarchy_factor) {
      throw ConfigError("oracle_aux: data has " + std::to_string(data.train.hierarchy_factor) +
                        " subclasses per class but hierarchy_factor=" + std::to_string(cfg.hierarchy_factor));
    }
  }
}

/// Owns everything one run mutates and the artifact streams.
class Run {
 public:
  Run(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data, const RunOptions& opts)
      : cfg_(cfg),
        seed_(seed),
        data_(data),
        opts_(opts),
        net_cfg_(main_net_config(cfg, data)),
        env_(data.train, DualHeadNet<float>(net_cfg_, derive_seed(seed, "main")), cfg.sgd, env_config(cfg, seed)),
        config_hash_(fnv1a(net_cfg_.describe())),
        start_(std::chrono::steady_clock::now()) {
    summary_.method = cfg.method;
    summary_.seed = seed;
    if (!opts.out_dir.empty()) {
      std::filesystem::create_directories(opts.out_dir);
      csv_.open(opts.out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
      if (!csv_) throw IoError("cannot write " + (opts.out_dir / "metrics.csv").string());
      csv_ << kMetricsHeader << "\n";
      if (opts.trace) {
        trace_.open(opts.out_dir / "trace.tsv", std::ios::binary | std::ios::trunc);
        if (!trace_) throw IoError("cannot write " + (opts.out_dir / "trace.tsv").string());
        env_.set_trace(&trace_);
      }
    }
  }

  AuxLabelEnv& env() { return env_; }
  RunSummary& summary() { return summary_; }

  double seconds() const {
    if (!cfg_.record_wall_clock) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void record(MetricsRecord r) {
    r.seconds = seconds();
    if (csv_.is_open()) {
      csv_ << format_metrics_row(r) << "\n";
      csv_.flush();
      if (!csv_) throw IoError("write failed for " + (opts_.out_dir / "metrics.csv").string());
    }
    summary_.records.push_back(std::move(r));
  }

  /// One TrainMain episode with `label` choosing each action. Returns true
  /// when early stopping triggers.
  template <typename Labeler>
  bool main_episode(int episode, Labeler&& label) {
    const std::uint64_t before = env_.canonical_hash();
    const double lr = env_.learning_rate();
    std::optional<Observation> obs = env_.reset(TrainingMode::TrainMain);
    double loss_sum = 0.0;
    int batches = 0;
    while (obs) {
      StepResult r = env_.step(label(*obs));
      if (auto it = r.info.find("train_loss"); it != r.info.end()) {
        loss_sum += it->second;
        ++batches;
      }
      obs = std::move(r.observation);
    }
    env_.end_episode();
    if (lr > 0.0 && env_.canonical_hash() == before) {
      throw ProtocolError("main episode " + std::to_string(episode) + " left the canonical model unchanged");
    }
    ++summary_.main_episodes;

    const ClassificationMetrics train = evaluate(env_.main_net(), data_.train, kEvalBatch);
    const ClassificationMetrics test = evaluate(env_.main_net(), data_.test, kEvalBatch);
    MetricsRecord tr{episode, "train", train.accuracy, train.precision, train.recall, train.f1,
                     batches ? loss_sum / batches : train.mean_loss, std::nullopt, std::nullopt, lr, 0.0};
    record(tr);
    record({episode, "test", test.accuracy, test.precision, test.recall, test.f1, test.mean_loss, std::nullopt,
            std::nullopt, lr, 0.0});
    summary_.test_accuracy.push_back(test.accuracy);
    if (summary_.test_accuracy.size() == 1 || test.accuracy > summary_.best.accuracy) {
      summary_.best = test;
      summary_.best_epoch = episode;
      if (!opts_.out_dir.empty()) save_checkpoint(opts_.out_dir / "best.ckpt", env_.canonical(), config_hash_);
    }
    if (opts_.log != nullptr) {
      *opts_.log << to_string(cfg_.method) << " seed=" << seed_ << " epoch=" << episode
                 << " test_acc=" << percent(test.accuracy) << " best=" << percent(summary_.best.accuracy) << "@"
                 << summary_.best_epoch << "\n";
    }
    return early_stop(summary_.test_accuracy, cfg_.early_stop_patience);
  }

  void finish(int episodes_done, bool stopped) {
    summary_.stop_epoch = episodes_done;
    summary_.early_stopped = stopped;
    std::ostringstream os;
    os << "[run]\n"
       << "method=" << to_string(cfg_.method) << "\n"
       << "seed=" << seed_ << "\n"
       << "git_describe=" << git_describe() << "\n"
       << "train_samples=" << data_.train.size() << "\n"
       << "test_samples=" << data_.test.size() << "\n"
       << "main_net=" << net_cfg_.describe() << "\n"
       << "[result]\n"
       << "best_epoch=" << summary_.best_epoch << "\n"
       << "best_accuracy=" << num(summary_.best.accuracy) << "\n"
       << "best_precision=" << num(summary_.best.precision) << "\n"
       << "best_recall=" << num(summary_.best.recall) << "\n"
       << "best_f1=" << num(summary_.best.f1) << "\n"
       << "best_loss=" << num(summary_.best.mean_loss) << "\n"
       << "stop_epoch=" << summary_.stop_epoch << "\n"
       << "early_stopped=" << (stopped ? "true" : "false") << "\n"
       << "agent_episodes=" << summary_.agent_episodes << "\n"
       << "main_episodes=" << summary_.main_episodes << "\n"
       << "canonical_checks=" << summary_.canonical_checks << "\n"
       << "[config]\n"
       << format_config(cfg_);
    summary_.summary_text = os.str();
    if (!opts_.out_dir.empty()) write_file_atomic(opts_.out_dir / "summary.txt", summary_.summary_text);
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  const DataSplits& data() const { return data_; }
  const MainNetConfig& net_config() const { return net_cfg_; }
  const RunOptions& options() const { return opts_; }

 private:
  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  const DataSplits& data_;
  const RunOptions& opts_;
  MainNetConfig net_cfg_;
  AuxLabelEnv env_;
  std::uint64_t config_hash_;
  std::chrono::steady_clock::time_point start_;
  std::ofstream csv_;
  std::ofstream trace_;
  RunSummary summary_;
};

}  // namespace

std::string format_metrics_row(const MetricsRecord& r) {
  return std::to_string(r.epoch) + "," + r.split + "," + opt(r.accuracy) + "," + opt(r.precision) + "," +
         opt(r.recall) + "," + opt(r.f1) + "," + opt(r.loss) + "," + opt(r.reward) + "," + opt(r.entropy) + "," +
         num(r.lr) + "," + num(r.seconds);
}

bool early_stop(std::span<const double> history, int patience) {
  if (history.empty()) throw DomainError("early_stop: empty history");
  if (patience <= 0) return false;
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[best]) best = i;
  }
  return history.size() - 1 - best >= static_cast<std::size_t>(patience);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  // splitmix64 finalizer over seed ^ hash(tag)
  std::uint64_t z = seed ^ fnv1a(tag);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DataSplits load_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.data_source) {
    case DataSource::Synthetic: {
      data::SyntheticSpec spec = cfg.synthetic;
      spec.hierarchy_factor = cfg.hierarchy_factor;
      spec.seed = cfg.synthetic.seed + seed;
      auto gen = data::generate_synthetic(spec);
      return {std::move(gen.train), std::move(gen.test)};
    }
    case DataSource::Tensor:
      return {data::load_dataset(cfg.data_path, "train"), data::load_dataset(cfg.data_path, "test")};
    case DataSource::Cifar100: {
      const auto map = cfg.superclass_map.empty() ? data::default_superclass_map()
                                                  : data::load_superclass_map(cfg.superclass_map);
      const std::filesystem::path dir(cfg.data_path);
      DataSplits s{data::load_cifar100(dir / "train.bin", map, "train"), data::load_cifar100(dir / "test.bin", map, "test")};
      const auto stats = data::channel_stats(s.train);
      data::normalize_channels(s.train, stats);
      data::normalize_channels(s.test, stats);
      return s;
    }
  }
  throw ConfigError("unknown data source");
}

RunSummary run_alternating(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data,
                           const RunOptions& opts) {
  if (!cfg.is_agent_method()) throw ConfigError("run_alternating needs method rl_aux or wa_rl_aux");
  cfg.validate();
  check_data(cfg, data);
  Run run(cfg, seed, data, opts);
  AuxLabelEnv& env = run.env();

  PolicyNetConfig pcfg;
  pcfg.input_dim = data.train.input_dim();
  pcfg.hierarchy = env.hierarchy();
  pcfg.extractor_hidden = cfg.policy_hidden;
  pcfg.feature_dim = cfg.policy_feature_dim;
  pcfg.weight_aware = cfg.method == Method::WaRlAux;
  PpoAgent agent(pcfg, cfg.ppo, derive_seed(seed, "policy"));
  RolloutBuffer buffer;

  int episode = 0;
  bool stopped = false;
  while (episode < cfg.epochs && !stopped) {
    ++episode;
    if (episode % 2 == 1) {
      const std::uint64_t canonical = env.canonical_hash();
      const double lr = env.learning_rate();
      std::optional<Observation> obs = env.reset(TrainingMode::TrainAgent);
      double reward_sum = 0.0, entropy_sum = 0.0, loss_sum = 0.0;
      int events = 0;
      while (obs) {
        ActResult a = agent.act(*obs, /*stochastic=*/true);
        StepResult r = env.step(a.action);
        buffer.add(a.observation, a.action.sub_label, a.action.weight_index, a.log_prob, a.value, r.reward,
                   r.episode_done);
        if (auto it = r.info.find("reward"); it != r.info.end()) {
          reward_sum += it->second;
          entropy_sum += r.info.at("entropy");
          loss_sum += r.info.at("eval_loss");
          ++events;
        }
        obs = std::move(r.observation);
      }
      env.end_episode();
      if (parameter_hash(env.main_net()) != canonical || env.canonical_hash() != canonical) {
        throw ProtocolError("agent episode " + std::to_string(episode) + " changed the canonical model");
      }
      ++run.summary().canonical_checks;
      agent.update(buffer);
      ++run.summary().agent_episodes;
      MetricsRecord rec;
      rec.epoch = episode;
      rec.split = "agent";
      if (events > 0) {
        rec.loss = loss_sum / events;
        rec.reward = reward_sum / events;
        rec.entropy = entropy_sum / events;
      }
      rec.lr = lr;
      run.record(rec);
    } else {
      stopped = run.main_episode(episode, [&](const Observation& o) { return agent.act(o, false).action; });
    }
  }
  if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir / "policy.ckpt", agent.snapshot(episode), fnv1a(pcfg.describe()));
  run.finish(episode, stopped);
  return run.summary();
}

RunSummary run_baseline(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data,
                        const RunOptions& opts) {
  if (cfg.is_agent_method()) throw ConfigError("run_baseline needs single_task, oracle_aux or random_aux");
  cfg.validate();
  check_data(cfg, data);
  Run run(cfg, seed, data, opts);
  const int psi = cfg.hierarchy_factor;

  std::vector<int> labels(data.train.size(), 0);
  if (cfg.method == Method::OracleAux) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = (*data.train.subclass_labels)[i] - psi * data.train.primary_labels[i];
    }
  } else if (cfg.method == Method::RandomAux) {
    std::mt19937_64 rng(derive_seed(seed, "random_aux"));
    std::uniform_int_distribution<int> pick(0, psi - 1);
    for (int& l : labels) l = pick(rng);
  }

  int episode = 0;
  bool stopped = false;
  // Agent slots of the schedule are skipped, so baselines see the same
  // number of main epochs as the alternating methods.
  while (episode + 2 <= cfg.epochs && !stopped) {
    episode += 2;
    stopped = run.main_episode(episode, [&](const Observation& o) {
      ActionMsg a;
      a.sub_label = labels[o.sample_id];
      return a;
    });
  }
  run.finish(episode, stopped);
  return run.summary();
}

RunSummary run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data,
                          const RunOptions& opts) {
  return cfg.is_agent_method() ? run_alternating(cfg, seed, data, opts) : run_baseline(cfg, seed, data, opts);
}

SeedStats seed_stats(std::span<const double> values) {
  if (values.empty()) throw DomainError("seed_stats: no values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

MultiSeedSummary run_seeds(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  MultiSeedSummary out;
  std::vector<double> best;
  for (std::uint64_t seed : cfg.seeds) {
    RunOptions o = opts;
    if (!opts.out_dir.empty()) o.out_dir = opts.out_dir / ("seed_" + std::to_string(seed));
    const DataSplits data = load_data(cfg, seed);
    out.runs.push_back(run_experiment(cfg, seed, data, o));
    best.push_back(out.runs.back().best.accuracy);
  }
  out.best_accuracy = seed_stats(best);
  if (!opts.out_dir.empty()) {
    std::ostringstream os;
    os << "method=" << to_string(cfg.method) << "\n"
       << "git_describe=" << git_describe() << "\n"
       << "seeds=" << out.runs.size() << "\n";
    for (const auto& r : out.runs) {
      os << "seed_" << r.seed << "=best_accuracy:" << num(r.best.accuracy) << " best_epoch:" << r.best_epoch
         << " stop_epoch:" << r.stop_epoch << "\n";
    }
    os << "best_accuracy_mean=" << num(out.best_accuracy.mean) << "\n"
       << "best_accuracy_std=" << num(out.best_accuracy.stddev) << "\n"
       << "best_accuracy_percent=" << percent(out.best_accuracy.mean) << " +- " << percent(out.best_accuracy.stddev)
       << "\n";
    write_file_atomic(opts.out_dir / "summary.txt", os.str());
  }
  return out;
}

std::vector<AblationRow> weight_ablation(const ExperimentConfig& cfg, std::span<const double> lambdas,
                                         const RunOptions& opts) {
  if (cfg.method != Method::RlAux) throw ConfigError("weight_ablation needs method rl_aux");
  if (lambdas.empty()) throw ConfigError("weight_ablation: empty lambda grid");
  std::vector<AblationRow> rows;
  for (double lambda : lambdas) {
    ExperimentConfig c = cfg;
    c.env.aux_weight = lambda;
    RunOptions o = opts;
    if (!opts.out_dir.empty()) o.out_dir = opts.out_dir / ("lambda_" + num(lambda));
    AblationRow row;
    row.lambda = lambda;
    const MultiSeedSummary s = run_seeds(c, o);
    row.runs = s.runs;
    row.best_accuracy = s.best_accuracy;
    rows.push_back(std::move(row));
  }
  if (!opts.out_dir.empty()) {
    std::ostringstream os;
    os << "lambda,best_accuracy_mean,best_accuracy_std,best_epochs\n";
    for (const auto& r : rows) {
      os << num(r.lambda) << "," << num(r.best_accuracy.mean) << "," << num(r.best_accuracy.stddev) << ",";
      for (std::size_t i = 0; i < r.runs.size(); ++i) os << (i ? ";" : "") << r.runs[i].best_epoch;
      os << "\n";
    }
    write_file_atomic(opts.out_dir / "ablation.csv", os.str());
  }
  return rows;
}

std::string git_describe() { return RLAUX_GIT_DESCRIBE; }

}  // namespace rlaux
