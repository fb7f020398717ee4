// Acceptance criteria A1-A11. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. The training criteria share a run cache, so the
// λ=1 epoch-reset rl_aux runs feed A1, A2, A7 and A9.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rlaux/aux_math.hpp"
#include "rlaux/data/synthetic.hpp"
#include "rlaux/driver.hpp"
#include "rlaux/env.hpp"
#include "rlaux/main_net.hpp"
#include "rlaux/metrics.hpp"
#include "rlaux/nn/gradcheck.hpp"
#include "rlaux/nn/layers.hpp"
#include "rlaux/ppo.hpp"

using namespace rlaux;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string pts(double accuracy) { return fmt(100.0 * accuracy, 2); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// Training runs on the planted-hierarchy setup

ExperimentConfig a1_config() {
  ExperimentConfig cfg;
  cfg.hierarchy_factor = 3;
  cfg.synthetic = data::SyntheticSpec{};
  cfg.epochs = 200;
  cfg.seeds = {1, 2, 3};
  return cfg;
}

struct RunKey {
  Method method = Method::RlAux;
  double lambda = 1.0;
  ResetGranularity reset = ResetGranularity::Epoch;
  std::uint64_t seed = 1;

  std::string name() const {
    std::string n = to_string(method);
    if (method == Method::RlAux) n += "_lambda" + fmt(lambda, 2);
    if (reset == ResetGranularity::Batch) n += "_batchreset";
    return n + "/seed_" + std::to_string(seed);
  }
};

class RunCache {
 public:
  explicit RunCache(fs::path root) : root_(std::move(root)) {}

  const RunSummary& get(const RunKey& key) {
    const std::string name = key.name();
    if (auto it = runs_.find(name); it != runs_.end()) return it->second.summary;
    ExperimentConfig cfg = a1_config();
    cfg.method = key.method;
    cfg.env.aux_weight = key.lambda;
    cfg.env.reset_granularity = key.reset;
    cfg.seeds = {key.seed};
    const auto t0 = Clock::now();
    const DataSplits data = load_data(cfg, key.seed);
    RunOptions opts;
    if (!root_.empty()) opts.out_dir = root_ / name;
    Entry e{run_experiment(cfg, key.seed, data, opts), seconds_since(t0)};
    std::cerr << "  run " << name << ": best " << pts(e.summary.best.accuracy) << "% @" << e.summary.best_epoch
              << ", " << e.summary.stop_epoch << " episodes, " << fmt(e.seconds, 1) << " s\n";
    return runs_.emplace(name, std::move(e)).first->second.summary;
  }

  double seconds(const RunKey& key) const { return runs_.at(key.name()).seconds; }

  std::vector<const RunSummary*> agent_runs() const {
    std::vector<const RunSummary*> out;
    for (const auto& [name, e] : runs_) {
      if (e.summary.method == Method::RlAux || e.summary.method == Method::WaRlAux) out.push_back(&e.summary);
    }
    return out;
  }

 private:
  struct Entry {
    RunSummary summary;
    double seconds = 0.0;
  };
  fs::path root_;
  std::map<std::string, Entry> runs_;
};

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

double mean_best(RunCache& cache, RunKey key) {
  double sum = 0.0;
  for (auto s : kSeeds) {
    key.seed = s;
    sum += cache.get(key).best.accuracy;
  }
  return sum / static_cast<double>(kSeeds.size());
}

Verdict a1(RunCache& cache) {
  const double rl = mean_best(cache, {Method::RlAux});
  const double wa = mean_best(cache, {Method::WaRlAux});
  const double single = mean_best(cache, {Method::SingleTask});
  const double oracle = mean_best(cache, {Method::OracleAux});
  double run_seconds = 0.0;
  for (Method m : {Method::RlAux, Method::WaRlAux, Method::SingleTask, Method::OracleAux}) {
    for (auto s : kSeeds) run_seconds += cache.seconds({m, 1.0, ResetGranularity::Epoch, s});
  }
  const bool order = oracle >= rl && rl >= single + 0.02 && wa >= rl - 0.005;
  const bool budget = run_seconds <= 900.0;
  std::ostringstream os;
  os << "oracle_aux=" << pts(oracle) << " rl_aux=" << pts(rl) << " wa_rl_aux=" << pts(wa)
     << " single_task=" << pts(single) << " (need oracle>=rl>=single+2.00, wa>=rl-0.50); runtime "
     << fmt(run_seconds, 0) << " s (budget 900 s)";
  if (!order) os << "; ordering not met";
  if (!budget) os << "; over budget";
  return {order && budget, os.str()};
}

Verdict a2(RunCache& cache) {
  std::ostringstream os;
  double lo = 1.0, hi = 0.0;
  for (double lambda : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double m = mean_best(cache, {Method::RlAux, lambda});
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    os << "λ=" << lambda << ":" << pts(m) << " ";
  }
  os << "range=" << pts(hi - lo) << " points (need >= 1.00)";
  return {hi - lo >= 0.01, os.str()};
}

Verdict a7_runs(RunCache& cache) {
  int episodes = 0, checks = 0, main_episodes = 0;
  for (const RunSummary* r : cache.agent_runs()) {
    episodes += r->agent_episodes;
    checks += r->canonical_checks;
    main_episodes += r->main_episodes;
  }
  std::ostringstream os;
  os << "driver runs: " << checks << "/" << episodes << " agent episodes restored the canonical hash, "
     << main_episodes << " main episodes changed it";
  return {episodes > 0 && checks == episodes, os.str()};
}

Verdict a9(RunCache& cache) {
  const double epoch = mean_best(cache, {Method::RlAux});
  const double batch = mean_best(cache, {Method::RlAux, 1.0, ResetGranularity::Batch});
  const double diff = std::abs(epoch - batch);
  return {diff <= 0.015, "epoch reset=" + pts(epoch) + " batch reset=" + pts(batch) + " |diff|=" + pts(diff) +
                             " points (need <= 1.50)"};
}

// ---------------------------------------------------------------------------
// Numerical criteria

Verdict a3() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  int nonzero_outside = 0;
  for (int i = 0; i < 1000; ++i) {
    const int c = 1 + static_cast<int>(rng() % 8), psi = 1 + static_cast<int>(rng() % 8);
    const HierarchyConfig h(c, psi);
    const int y = static_cast<int>(rng() % static_cast<unsigned>(c));
    nn::VectorD z(h.num_aux());
    for (int k = 0; k < z.size(); ++k) z(k) = nn::uniform(rng, -20.0, 20.0);
    const nn::VectorD p = masked_softmax(z, y, h);

    long double denom = 0.0L;
    for (int k = psi * y; k < psi * (y + 1); ++k) denom += std::exp(static_cast<long double>(z(k)));
    for (int k = 0; k < z.size(); ++k) {
      if (k < psi * y || k >= psi * (y + 1)) {
        if (p(k) != 0.0) ++nonzero_outside;
      } else {
        const long double ref = std::exp(static_cast<long double>(z(k))) / denom;
        worst = std::max(worst, static_cast<double>(std::fabs(static_cast<long double>(p(k)) - ref)));
      }
    }
  }
  return {nonzero_outside == 0 && worst <= 1e-6, "1000 cases: " + std::to_string(nonzero_outside) +
                                                     " nonzero out-of-block entries, max in-block error " +
                                                     fmt(worst, 12)};
}

Verdict a4() {
  int mismatches = 0;
  for (int i = 0; i <= 20; ++i) {
    const float got = static_cast<float>(WeightAction::from_index(i).scaled());
    const float exact = static_cast<float>(std::exp2(10.0 * (i / 20.0) - 5.0));
    if (got != exact || (i % 2 == 0 && got != std::ldexp(1.0f, i / 2 - 5))) ++mismatches;
  }
  const bool ends = static_cast<float>(WeightAction::from_index(0).scaled()) == 0.03125f &&
                    static_cast<float>(WeightAction::from_index(20).scaled()) == 32.0f &&
                    static_cast<float>(WeightAction::from_index(10).scaled()) == 1.0f;
  return {mismatches == 0 && ends,
          std::to_string(21 - mismatches) + "/21 indices exact in float; endpoints 0.03125, 32 and midpoint 1 " +
              (ends ? "exact" : "wrong")};
}

Verdict a5() {
  int passed = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 500);
    MainNetConfig mc;
    mc.input_dim = 5;
    mc.extractor_hidden = {7};
    mc.feature_dim = 6;
    mc.head_hidden = 8;
    mc.hierarchy = HierarchyConfig(3, 3);
    DualHeadNet<double> net = DualHeadNet<float>(mc, seed).cast<double>();
    nn::MatrixD x(6, 5);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = nn::uniform(rng, -1.0, 1.0);
    std::vector<int> y(6), aux(6);
    std::vector<double> w(6);
    for (std::size_t i = 0; i < 6; ++i) {
      y[i] = static_cast<int>(rng() % 3);
      aux[i] = mc.hierarchy.global_aux(y[i], static_cast<int>(rng() % 3));
      w[i] = WeightAction::from_index(static_cast<int>(rng() % 21)).scaled();
    }
    const std::optional<AuxTargets> targets = AuxTargets{aux, w};
    auto params = net.parameters();
    const auto report = nn::gradient_check<double>(
        params, [&](nn::Tape<double>& t) { return weighted_total_loss(t, net, x, y, targets, 2.0); }, 1e-4);
    worst = std::max(worst, report.max_rel_error());
    if (report.passed) ++passed;
  }
  return {passed == 20, std::to_string(passed) + "/20 seeds pass, max relative error " + fmt(worst, 8)};
}

Verdict a6() {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = 1 + static_cast<int>(rng() % 20), k = 2 + static_cast<int>(rng() % 15);
    nn::MatrixD probs(n, k);
    for (int r = 0; r < n; ++r) {
      double total = 0.0;
      for (int j = 0; j < k; ++j) total += probs(r, j) = nn::uniform(rng, 0.0, 1.0) * (rng() % 4 == 0 ? 0.0 : 1.0);
      if (total == 0.0) probs(r, 0) = total = 1.0;
      probs.row(r) /= total;
    }
    std::vector<double> losses(static_cast<std::size_t>(1 + rng() % 30));
    for (double& l : losses) l = nn::uniform(rng, 0.0, 5.0);
    const EntropySign sign = (i % 2) ? EntropySign::Diversity : EntropySign::Literal;

    double h = 0.0;
    for (int j = 0; j < k; ++j) {
      double m = 0.0;
      for (int r = 0; r < n; ++r) m += probs(r, j);
      m /= n;
      if (m > 0.0) h -= m * std::log(m);
    }
    double mean_loss = 0.0;
    for (double l : losses) mean_loss += l;
    mean_loss /= static_cast<double>(losses.size());
    const double expected = -mean_loss + (sign == EntropySign::Diversity ? h : -h);
    const RewardTerms got = compute_reward(losses, entropy_bonus(batch_entropy(probs), sign));
    worst = std::max(worst, std::abs(got.total - expected));
  }

  double extremes = 0.0;
  for (int k : {2, 5, 12, 21}) {
    nn::MatrixD collapsed = nn::MatrixD::Zero(8, k);
    collapsed.col(k - 1).setOnes();
    nn::MatrixD uniform = nn::MatrixD::Constant(8, k, 1.0 / k);
    std::vector<int> same(8, 1), spread(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) spread[static_cast<std::size_t>(j)] = j;
    extremes = std::max({extremes, std::abs(batch_entropy(collapsed)),
                         std::abs(batch_entropy(uniform) - std::log(static_cast<double>(k))),
                         std::abs(batch_entropy_of_actions(same, k)),
                         std::abs(batch_entropy_of_actions(spread, k) - std::log(static_cast<double>(k)))});
  }
  return {worst <= 1e-6 && extremes <= 1e-6,
          "100 reward cases, max error " + fmt(worst, 12) + "; collapsed/uniform entropy max error " + fmt(extremes, 12)};
}

Verdict a7_env() {
  data::SyntheticSpec spec;
  spec.num_primary = 3;
  spec.hierarchy_factor = 2;
  spec.samples_per_subclass = 30;
  spec.input_dim = 12;
  spec.seed = 7;
  const auto d = data::generate_synthetic(spec);
  MainNetConfig mc;
  mc.input_dim = 12;
  mc.extractor_hidden = {16};
  mc.feature_dim = 12;
  mc.head_hidden = 16;
  mc.hierarchy = HierarchyConfig(3, 2);
  EnvConfig ec;
  ec.train_batch_size = 20;
  ec.eval_batch_size = 40;
  ec.seed = 7;
  ec.entropy_source = EntropySource::EmpiricalActions;

  int failures = 0, checked = 0;
  for (double lr : {0.05, 0.0}) {
    AuxLabelEnv env(d.train, DualHeadNet<float>(mc, 7), nn::SgdConfig{lr, 0.9, 50, 0.5}, ec);
    for (int epoch = 0; epoch < 6; ++epoch) {
      const TrainingMode mode = epoch % 2 == 0 ? TrainingMode::TrainAgent : TrainingMode::TrainMain;
      const std::uint64_t before = env.canonical_hash();
      std::optional<Observation> obs = env.reset(mode);
      while (obs) {
        obs = env.step(ActionMsg{static_cast<int>(obs->sample_id % 2), {}, {}}).observation;
      }
      env.end_episode();
      ++checked;
      const std::uint64_t now = parameter_hash(env.main_net());
      if (now != env.canonical_hash()) ++failures;
      if (mode == TrainingMode::TrainAgent && now != before) ++failures;
      if (mode == TrainingMode::TrainMain && lr > 0.0 && now == before) ++failures;
      if (mode == TrainingMode::TrainMain && lr == 0.0 && now != before) ++failures;
    }
  }
  return {failures == 0, "environment: " + std::to_string(checked - failures) + "/" + std::to_string(checked) +
                             " episodes hashed as expected (lr 0.05 and lr 0)"};
}

PolicyNetConfig small_policy(int c, int psi, bool wa) {
  PolicyNetConfig cfg;
  cfg.input_dim = 4;
  cfg.hierarchy = HierarchyConfig(c, psi);
  cfg.extractor_hidden = {12};
  cfg.feature_dim = 10;
  cfg.weight_aware = wa;
  return cfg;
}

Observation random_obs(std::mt19937_64& rng, int y, std::size_t id) {
  Observation obs;
  obs.sample_id = id;
  obs.x.resize(4);
  for (int i = 0; i < 4; ++i) obs.x(i) = static_cast<float>(nn::uniform(rng, -1.0, 1.0));
  obs.primary_label = y;
  return obs;
}

Verdict a8() {
  std::ostringstream os;
  bool ok = true;

  double max_dev = 0.0;
  for (bool wa : {false, true}) {
    PpoConfig cfg;
    cfg.minibatch_size = 16;
    PpoAgent agent(small_policy(3, 3, wa), cfg, 8);
    std::mt19937_64 rng(8);
    for (int round = 0; round < 3; ++round) {
      RolloutBuffer buf;
      for (int t = 0; t < 40; ++t) {
        const auto res = agent.act(random_obs(rng, t % 3, static_cast<std::size_t>(t)), true);
        const double reward = (t + 1) % 10 == 0 ? nn::uniform(rng, -1.0, 0.0) : 0.0;
        buf.add(res.observation, res.action.sub_label, res.action.weight_index, res.log_prob, res.value, reward,
                t == 39);
      }
      max_dev = std::max(max_dev, agent.update(buf).initial_max_ratio_deviation);
    }
  }
  ok = ok && max_dev <= 1e-5;
  os << "initial |ratio-1| max " << fmt(max_dev, 8);

  const bool clips = clipped_surrogate_term(1.5, 1.0, 0.2) == 1.2 && clipped_surrogate_term(0.5, -1.0, 0.2) == -0.8 &&
                     clipped_surrogate_term(1.0, 0.7, 0.2) == 0.7;
  ok = ok && clips;
  os << "; clip cases " << (clips ? "exact" : "wrong");

  std::mt19937_64 rng(80);
  double lo = 1e9, slack = 1e9;
  for (bool wa : {false, true}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const int psi = 2 + static_cast<int>(seed % 5);
      PpoAgent agent(small_policy(3, psi, wa), PpoConfig{}, seed);
      if (seed % 3 == 1) {
        for (auto* p : agent.policy().parameters()) p->value *= 30.0f;
      }
      if (seed % 3 == 2) {
        for (auto* p : agent.policy().parameters()) p->value.setZero();
      }
      nn::MatrixF obs(8, agent.policy().config().observation_dim());
      for (int r = 0; r < 8; ++r) obs.row(r) = agent.policy().encode(random_obs(rng, r % 3, 0).x, r % 3);
      const double h = policy_entropy(agent.policy(), obs);
      const double bound = std::log(static_cast<double>(psi)) + (wa ? std::log(21.0) : 0.0);
      lo = std::min(lo, h);
      slack = std::min(slack, bound - h);
    }
  }
  const bool bounded = lo >= 0.0 && slack >= -1e-9;
  ok = ok && bounded;
  os << "; entropy min " << fmt(lo, 6) << ", min slack to bound " << std::scientific << std::setprecision(2) << slack;
  return {ok, os.str()};
}

Verdict a10(const fs::path& work) {
  const fs::path dir = work / "a10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ExperimentConfig cfg = a1_config();
  cfg.epochs = 6;
  cfg.synthetic.samples_per_subclass = 40;
  cfg.seeds = {11};
  std::ofstream(dir / "train.cfg") << format_config(cfg);

  std::vector<std::string> csv;
  for (const char* name : {"first", "second"}) {
    const std::string cmd = std::string("\"") + RLAUX_CLI_PATH + "\" --config \"" + (dir / "train.cfg").string() +
                            "\" --seed 7 --out \"" + (dir / name).string() + "\" --quiet train";
    if (std::system(cmd.c_str()) != 0) return {false, "train invocation failed: " + cmd};
    const fs::path metrics = dir / name / "seed_7" / "metrics.csv";
    if (!fs::exists(metrics)) return {false, "missing " + metrics.string()};
    csv.push_back(read_file(metrics));
  }
  const bool same = csv[0] == csv[1] && !csv[0].empty();
  return {same, "two train invocations, seed 7: metrics.csv " + std::to_string(csv[0].size()) + " bytes, " +
                    (same ? "byte-identical" : "different")};
}

Verdict a11() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int k = 2 + static_cast<int>(rng() % 19);
    const std::size_t n = 1 + rng() % 300;
    std::vector<int> truth(n), pred(n);
    for (std::size_t s = 0; s < n; ++s) {
      truth[s] = static_cast<int>(rng() % static_cast<unsigned>(k));
      pred[s] = (rng() % 3 == 0) ? truth[s] : static_cast<int>(rng() % static_cast<unsigned>(k));
    }
    double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0, correct = 0.0;
    for (int c = 0; c < k; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t s = 0; s < n; ++s) {
        if (pred[s] == c && truth[s] == c) ++tp;
        if (pred[s] == c && truth[s] != c) ++fp;
        if (pred[s] != c && truth[s] == c) ++fn;
      }
      correct += tp;
      const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      p_sum += p;
      r_sum += r;
      f_sum += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    const auto m = macro_scores(confusion_matrix(truth, pred, k));
    worst = std::max({worst, std::abs(m.precision - p_sum / k), std::abs(m.recall - r_sum / k),
                      std::abs(m.f1 - f_sum / k), std::abs(m.accuracy - correct / static_cast<double>(n))});
  }
  return {worst <= 1e-9, "100 random label sets, max deviation from the counting oracle " + fmt(worst, 15)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria A1-A11"};
  std::vector<std::string> only;
  std::string out = "acceptance_runs";
  bool skip_training = false;
  app.add_option("--only", only, "Criteria to run, e.g. --only A3 A4");
  app.add_option("--out", out, "Directory for run artifacts");
  app.add_flag("--skip-training", skip_training, "Skip A1, A2, A7 driver runs and A9");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::absolute(out);
  fs::create_directories(work);
  RunCache cache(work / "runs");

  auto wanted = [&](const std::string& id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };
  const std::set<std::string> training{"A1", "A2", "A9"};

  std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"A3", a3},
      {"A4", a4},
      {"A5", a5},
      {"A6", a6},
      {"A8", a8},
      {"A10", [&] { return a10(work); }},
      {"A11", a11},
      {"A1", [&] { return a1(cache); }},
      {"A2", [&] { return a2(cache); }},
      {"A9", [&] { return a9(cache); }},
      {"A7",
       [&] {
         Verdict env = a7_env();
         if (skip_training || cache.agent_runs().empty()) return env;
         Verdict runs = a7_runs(cache);
         return Verdict{env.pass && runs.pass, env.detail + "; " + runs.detail};
       }},
  };

  int failed = 0;
  std::map<std::string, std::string> lines;
  for (auto& [id, fn] : criteria) {
    if (!wanted(id) || (skip_training && training.count(id))) continue;
    std::cerr << id << " ...\n";
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::string line = id + " " + (v.pass ? "PASS" : "FAIL") + " " + v.detail + " [" +
                       fmt(seconds_since(t0), 1) + " s]";
    std::cout << line << std::endl;
    lines[id] = line;
  }

  std::ofstream report(work / "acceptance.txt");
  for (int i = 1; i <= 11; ++i) {
    const std::string id = "A" + std::to_string(i);
    if (lines.count(id)) report << lines[id] << "\n";
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
