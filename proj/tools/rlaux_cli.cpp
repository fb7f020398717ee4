// rlaux: auxiliary-label learning experiments from the command line.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rlaux/checkpoint.hpp"
#include "rlaux/data/config.hpp"
#include "rlaux/data/synthetic.hpp"
#include "rlaux/data/tensor_file.hpp"
#include "rlaux/driver.hpp"
#include "rlaux/error.hpp"
#include "rlaux/metrics.hpp"
#include "rlaux/ppo.hpp"

namespace fs = std::filesystem;
using namespace rlaux;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool trace = false;
  bool quiet = false;
  std::vector<std::string> overrides;
};

ExperimentConfig build_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  for (const auto& o : g.overrides) apply_override(cfg, o);
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.out.empty()) cfg.out_dir = g.out;
  cfg.validate();
  return cfg;
}

RunOptions run_options(const Globals& g, const ExperimentConfig& cfg) {
  RunOptions o;
  o.out_dir = cfg.out_dir;
  o.trace = g.trace;
  o.log = g.quiet ? nullptr : &std::cerr;
  return o;
}

void print_metrics(const std::string& label, const ClassificationMetrics& m) {
  std::cout << label << " accuracy=" << m.accuracy << " precision=" << m.precision << " recall=" << m.recall
            << " f1=" << m.f1 << " loss=" << m.mean_loss << " n=" << m.total << "\n";
}

MainNetConfig net_config_for(const ExperimentConfig& cfg, const DataSplits& data) {
  MainNetConfig m;
  m.input_dim = data.train.input_dim();
  m.extractor_hidden = cfg.extractor_hidden;
  m.feature_dim = cfg.feature_dim;
  m.head_hidden = cfg.head_hidden;
  m.hierarchy = HierarchyConfig(data.train.num_primary, cfg.hierarchy_factor);
  return m;
}

std::vector<double> parse_lambdas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("--lambdas: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError("--lambdas: empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Auxiliary-label learning with a reinforcement-learning labeler"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run a single seed instead of the configured list");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--trace", g.trace, "Write per-step environment traces");
  app.add_flag("--quiet", g.quiet, "No progress lines on stderr");
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic planted-hierarchy dataset");
  auto* train = app.add_subcommand("train", "Alternating agent/main training for every configured seed");
  auto* baseline = app.add_subcommand("baseline", "single_task, oracle_aux or random_aux runs");
  std::string baseline_method;
  baseline->add_option("--method", baseline_method, "Baseline method (default: method from the config)");
  auto* ablate = app.add_subcommand("ablate-weight", "rl_aux once per auxiliary weight");
  std::string lambdas = "0.25,0.5,1,2,4";
  ablate->add_option("--lambdas", lambdas, "Comma-separated weights");
  auto* eval = app.add_subcommand("eval", "Evaluate a main-network checkpoint on the test split");
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint manifest")->required()->check(CLI::ExistingFile);
  auto* dump = app.add_subcommand("dump-labels", "Write the agent's deterministic auxiliary labels");
  std::string policy_path;
  dump->add_option("--policy", policy_path, "Policy checkpoint manifest")->required()->check(CLI::ExistingFile);
  std::string dump_split = "train";
  dump->add_option("--split", dump_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  bool wa_policy = false;
  dump->add_flag("--weight-aware", wa_policy, "The policy has a weight head");
  for (auto* sub : {gen, train, baseline, ablate, eval, dump}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = build_config(g);
    const std::uint64_t first_seed = cfg.seeds.front();

    if (gen->parsed()) {
      if (cfg.data_source != DataSource::Synthetic) throw ConfigError("gen-data needs data_source=synthetic");
      const DataSplits data = load_data(cfg, first_seed);
      const fs::path dir = fs::path(cfg.out_dir) / "data";
      data::save_dataset(dir, data.train);
      data::save_dataset(dir, data.test);
      std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test samples to "
                << dir.string() << "\n";
    } else if (train->parsed()) {
      if (!cfg.is_agent_method()) throw ConfigError("train needs method rl_aux or wa_rl_aux; use baseline");
      const auto s = run_seeds(cfg, run_options(g, cfg));
      std::cout << to_string(cfg.method) << " best_accuracy mean=" << s.best_accuracy.mean
                << " std=" << s.best_accuracy.stddev << "\n";
    } else if (baseline->parsed()) {
      if (!baseline_method.empty()) cfg.method = parse_method(baseline_method);
      if (cfg.is_agent_method()) throw ConfigError("baseline needs single_task, oracle_aux or random_aux");
      const auto s = run_seeds(cfg, run_options(g, cfg));
      std::cout << to_string(cfg.method) << " best_accuracy mean=" << s.best_accuracy.mean
                << " std=" << s.best_accuracy.stddev << "\n";
    } else if (ablate->parsed()) {
      const auto grid = parse_lambdas(lambdas);
      const auto rows = weight_ablation(cfg, grid, run_options(g, cfg));
      std::cout << "lambda,best_accuracy_mean,best_accuracy_std\n";
      for (const auto& r : rows) {
        std::cout << r.lambda << "," << r.best_accuracy.mean << "," << r.best_accuracy.stddev << "\n";
      }
    } else if (eval->parsed()) {
      const DataSplits data = load_data(cfg, first_seed);
      const MainNetConfig net_cfg = net_config_for(cfg, data);
      const LoadedCheckpoint ck = load_checkpoint(checkpoint);
      if (ck.config_hash != fnv1a(net_cfg.describe())) {
        throw CheckpointError(checkpoint + ": checkpoint was written for a different network configuration");
      }
      DualHeadNet<float> net(net_cfg, 0);
      restore(net, ck.snapshot);
      print_metrics("test", evaluate(net, data.test, 512));
    } else if (dump->parsed()) {
      const DataSplits data = load_data(cfg, first_seed);
      PolicyNetConfig pcfg;
      pcfg.input_dim = data.train.input_dim();
      pcfg.hierarchy = HierarchyConfig(data.train.num_primary, cfg.hierarchy_factor);
      pcfg.extractor_hidden = cfg.policy_hidden;
      pcfg.feature_dim = cfg.policy_feature_dim;
      pcfg.weight_aware = wa_policy || cfg.method == Method::WaRlAux;
      const LoadedCheckpoint ck = load_checkpoint(policy_path);
      if (ck.config_hash != fnv1a(pcfg.describe())) {
        throw CheckpointError(policy_path + ": checkpoint was written for a different policy configuration");
      }
      PpoAgent agent(pcfg, cfg.ppo, 0);
      agent.restore(ck.snapshot);
      const data::Dataset& ds = dump_split == "train" ? data.train : data.test;
      const fs::path path = fs::path(cfg.out_dir) / ("labels_" + dump_split + ".csv");
      fs::create_directories(path.parent_path());
      std::ostringstream os;
      os << "sample,primary,sub_label,aux_label,weight_index,subclass\n";
      const auto x = ds.inputs.matrix();
      for (std::size_t i = 0; i < ds.size(); ++i) {
        Observation obs{i, x.row(static_cast<Eigen::Index>(i)), ds.primary_labels[i]};
        const ActResult a = agent.act(obs, false);
        os << i << "," << obs.primary_label << "," << a.action.sub_label << ","
           << pcfg.hierarchy.global_aux(obs.primary_label, a.action.sub_label) << ","
           << (a.action.weight_index ? std::to_string(*a.action.weight_index) : "") << ","
           << (ds.subclass_labels ? std::to_string((*ds.subclass_labels)[i]) : "") << "\n";
      }
      write_file_atomic(path, os.str());
      std::cout << "wrote " << ds.size() << " labels to " << path.string() << "\n";
    }
  } catch (const rlaux::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
