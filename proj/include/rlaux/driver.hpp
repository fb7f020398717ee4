#pragma once

// Experiment orchestration: alternating agent/main epochs, fixed-labeler
// baselines, early stopping, the auxiliary-weight ablation and multi-seed
// replication. Each run writes metrics.csv, summary.txt and the best
// checkpoint into its own directory.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlaux/data/config.hpp"
#include "rlaux/data/dataset.hpp"
#include "rlaux/metrics.hpp"

namespace rlaux {

struct MetricsRecord {
  int epoch = 0;
  std::string split;  // train, test or agent
  std::optional<double> accuracy, precision, recall, f1;
  std::optional<double> loss;
  std::optional<double> reward;   // mean reward over the episode's reward events
  std::optional<double> entropy;  // mean batch entropy term
  double lr = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,split,accuracy,precision,recall,f1,loss,reward,entropy,lr,seconds";
std::string format_metrics_row(const MetricsRecord& r);

/// True iff the last `patience` evaluations all failed to beat the best one
/// before them. patience ≤ 0 never stops.
bool early_stop(std::span<const double> history, int patience);

/// Seed stream for a named component of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

struct DataSplits {
  data::Dataset train;
  data::Dataset test;
};
/// Synthetic data uses synthetic_seed + seed; file-backed sources ignore the seed.
DataSplits load_data(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunOptions {
  std::filesystem::path out_dir;  // empty: no files
  bool trace = false;             // per-step trace.tsv in out_dir
  std::ostream* log = nullptr;    // one progress line per main epoch
};

struct RunSummary {
  Method method = Method::RlAux;
  std::uint64_t seed = 0;
  int best_epoch = 0;  // episode index of the best test accuracy, earliest on ties
  ClassificationMetrics best;
  int stop_epoch = 0;  // episodes completed
  bool early_stopped = false;
  int agent_episodes = 0;
  int main_episodes = 0;
  int canonical_checks = 0;  // agent episodes whose end-state hash matched the canonical model
  std::vector<double> test_accuracy;  // one per main episode
  std::vector<MetricsRecord> records;
  std::string summary_text;
};

/// Runs the method named in cfg for one seed on the given data.
RunSummary run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data,
                          const RunOptions& opts = {});
/// Alternating agent/main schedule; cfg.method must be rl_aux or wa_rl_aux.
RunSummary run_alternating(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data,
                           const RunOptions& opts = {});
/// single_task, oracle_aux or random_aux.
RunSummary run_baseline(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data,
                        const RunOptions& opts = {});

struct SeedStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for one seed
};
SeedStats seed_stats(std::span<const double> values);

struct MultiSeedSummary {
  std::vector<RunSummary> runs;
  SeedStats best_accuracy;
};
/// One run per cfg.seeds entry in out_dir/seed_<n>, plus out_dir/summary.txt.
MultiSeedSummary run_seeds(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct AblationRow {
  double lambda = 0.0;
  SeedStats best_accuracy;
  std::vector<RunSummary> runs;  // per seed
};
/// run_alternating once per λ and seed, in input order; writes out_dir/ablation.csv.
std::vector<AblationRow> weight_ablation(const ExperimentConfig& cfg, std::span<const double> lambdas,
                                         const RunOptions& opts = {});

std::string git_describe();

}  // namespace rlaux
