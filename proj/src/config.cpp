#include "rlaux/data/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>

#include "rlaux/error.hpp"

namespace rlaux {

std::string to_string(Method m) {
  switch (m) {
    case Method::RlAux: return "rl_aux";
    case Method::WaRlAux: return "wa_rl_aux";
    case Method::SingleTask: return "single_task";
    case Method::OracleAux: return "oracle_aux";
    case Method::RandomAux: return "random_aux";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  for (Method m : {Method::RlAux, Method::WaRlAux, Method::SingleTask, Method::OracleAux, Method::RandomAux}) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + std::string(text) +
                    "' (expected rl_aux, wa_rl_aux, single_task, oracle_aux or random_aux)");
}

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::Synthetic: return "synthetic";
    case DataSource::Tensor: return "tensor";
    case DataSource::Cifar100: return "cifar100";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0 (0 disables early stopping)");
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (hierarchy_factor < 1) throw ConfigError("hierarchy_factor must be >= 1");
  if (feature_dim <= 0 || head_hidden <= 0 || policy_feature_dim <= 0) throw ConfigError("layer widths must be positive");
  for (int h : extractor_hidden) {
    if (h <= 0) throw ConfigError("extractor_hidden widths must be positive");
  }
  for (int h : policy_hidden) {
    if (h <= 0) throw ConfigError("policy_hidden widths must be positive");
  }
  if (env.train_batch_size == 0 || env.eval_batch_size == 0) throw ConfigError("batch sizes must be positive");
  if (!(env.aux_weight > 0.0)) throw ConfigError("aux_weight must be positive");
  if (!(env.focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be >= 0");
  sgd.validate();
  ppo.validate();
  if (data_source == DataSource::Synthetic) {
    auto spec = synthetic;
    spec.hierarchy_factor = hierarchy_factor;
    spec.validate();
  } else if (data_path.empty()) {
    throw ConfigError("data_source " + to_string(data_source) + " needs data_path");
  }
  if (data_source == DataSource::Cifar100 && hierarchy_factor != 5 && method == Method::OracleAux) {
    throw ConfigError("oracle_aux on cifar100 needs hierarchy_factor=5");
  }
}

namespace {

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Key {
  std::string name;
  Setter set;
  Getter get;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_int(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    throw ConfigError("expected a finite number, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view s) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (item.empty()) throw ConfigError("empty item in list '" + std::string(s) + "'");
    out.push_back(parse_int<T>(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

// Keys that reach into nested structs use explicit lambdas.
#define RLAUX_INT(name, expr, type)                                                       \
  Key {                                                                                   \
    name, [](ExperimentConfig& c, std::string_view v) { c.expr = parse_int<type>(v); },   \
        [](const ExperimentConfig& c) { return std::to_string(c.expr); }                  \
  }
#define RLAUX_REAL(name, expr)                                                            \
  Key {                                                                                   \
    name, [](ExperimentConfig& c, std::string_view v) { c.expr = parse_double(v); },      \
        [](const ExperimentConfig& c) { return fmt(c.expr); }                             \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"method", [](ExperimentConfig& c, std::string_view v) { c.method = parse_method(v); },
       [](const ExperimentConfig& c) { return to_string(c.method); }},
      RLAUX_INT("epochs", epochs, int),
      RLAUX_INT("early_stop_patience", early_stop_patience, int),
      {"seeds", [](ExperimentConfig& c, std::string_view v) { c.seeds = parse_list<std::uint64_t>(v); },
       [](const ExperimentConfig& c) { return join(c.seeds); }},
      {"out_dir", [](ExperimentConfig& c, std::string_view v) { c.out_dir = std::string(v); },
       [](const ExperimentConfig& c) { return c.out_dir; }},
      {"record_wall_clock", [](ExperimentConfig& c, std::string_view v) { c.record_wall_clock = parse_bool(v); },
       [](const ExperimentConfig& c) { return fmt(c.record_wall_clock); }},
      RLAUX_INT("train_batch_size", env.train_batch_size, std::size_t),
      RLAUX_INT("eval_batch_size", env.eval_batch_size, std::size_t),
      RLAUX_REAL("aux_weight", env.aux_weight),
      {"hierarchy_factor",
       [](ExperimentConfig& c, std::string_view v) {
         const int psi = parse_int<int>(v);
         if (psi < 1) throw ConfigError("hierarchy_factor must be >= 1");
         c.hierarchy_factor = psi;
       },
       [](const ExperimentConfig& c) { return std::to_string(c.hierarchy_factor); }},
      {"reset_granularity",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "epoch") {
           c.env.reset_granularity = ResetGranularity::Epoch;
         } else if (v == "batch") {
           c.env.reset_granularity = ResetGranularity::Batch;
         } else {
           throw ConfigError("reset_granularity must be epoch or batch");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.env.reset_granularity == ResetGranularity::Epoch ? "epoch" : "batch");
       }},
      {"entropy_sign",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "diversity") {
           c.env.entropy_sign = EntropySign::Diversity;
         } else if (v == "literal") {
           c.env.entropy_sign = EntropySign::Literal;
         } else {
           throw ConfigError("entropy_sign must be diversity or literal");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.env.entropy_sign == EntropySign::Diversity ? "diversity" : "literal");
       }},
      {"entropy_source",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "policy") {
           c.env.entropy_source = EntropySource::PolicyProbs;
         } else if (v == "actions") {
           c.env.entropy_source = EntropySource::EmpiricalActions;
         } else {
           throw ConfigError("entropy_source must be policy or actions");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.env.entropy_source == EntropySource::PolicyProbs ? "policy" : "actions");
       }},
      RLAUX_REAL("focal_gamma", env.focal_gamma),
      RLAUX_REAL("primary_lr", sgd.learning_rate),
      RLAUX_REAL("momentum", sgd.momentum),
      RLAUX_INT("scheduler_step", sgd.scheduler_step_epochs, int),
      RLAUX_REAL("scheduler_gamma", sgd.scheduler_gamma),
      {"extractor_hidden", [](ExperimentConfig& c, std::string_view v) { c.extractor_hidden = parse_list<int>(v); },
       [](const ExperimentConfig& c) { return join(c.extractor_hidden); }},
      RLAUX_INT("feature_dim", feature_dim, int),
      RLAUX_INT("head_hidden", head_hidden, int),
      {"policy_hidden", [](ExperimentConfig& c, std::string_view v) { c.policy_hidden = parse_list<int>(v); },
       [](const ExperimentConfig& c) { return join(c.policy_hidden); }},
      RLAUX_INT("policy_feature_dim", policy_feature_dim, int),
      RLAUX_REAL("ppo_lr", ppo.learning_rate),
      RLAUX_REAL("ppo_entropy_coef", ppo.entropy_coef),
      RLAUX_REAL("ppo_clip", ppo.clip_epsilon),
      RLAUX_REAL("gae_gamma", ppo.gae_gamma),
      RLAUX_REAL("gae_lambda", ppo.gae_lambda),
      RLAUX_INT("ppo_epochs", ppo.update_epochs, int),
      RLAUX_INT("ppo_minibatch", ppo.minibatch_size, int),
      RLAUX_REAL("ppo_value_coef", ppo.value_coef),
      RLAUX_REAL("ppo_max_grad_norm", ppo.max_grad_norm),
      {"data_source",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "synthetic") {
           c.data_source = DataSource::Synthetic;
         } else if (v == "tensor") {
           c.data_source = DataSource::Tensor;
         } else if (v == "cifar100") {
           c.data_source = DataSource::Cifar100;
         } else {
           throw ConfigError("data_source must be synthetic, tensor or cifar100");
         }
       },
       [](const ExperimentConfig& c) { return to_string(c.data_source); }},
      {"data_path", [](ExperimentConfig& c, std::string_view v) { c.data_path = std::string(v); },
       [](const ExperimentConfig& c) { return c.data_path; }},
      {"superclass_map", [](ExperimentConfig& c, std::string_view v) { c.superclass_map = std::string(v); },
       [](const ExperimentConfig& c) { return c.superclass_map; }},
      RLAUX_INT("synthetic_classes", synthetic.num_primary, int),
      RLAUX_INT("synthetic_per_subclass", synthetic.samples_per_subclass, int),
      RLAUX_INT("synthetic_dim", synthetic.input_dim, int),
      RLAUX_REAL("synthetic_separation", synthetic.separation),
      RLAUX_REAL("synthetic_stddev", synthetic.stddev),
      RLAUX_REAL("synthetic_spread", synthetic.spread),
      RLAUX_INT("synthetic_seed", synthetic.seed, std::uint64_t),
  };
  return table;
}

#undef RLAUX_INT
#undef RLAUX_REAL

const Key* find_key(std::string_view name) {
  for (const auto& k : keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value, const std::string& where) {
  const Key* k = find_key(key);
  if (k == nullptr) throw ConfigError(where + ": unknown key '" + std::string(key) + "'");
  try {
    k->set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + std::string(key) + ": " + e.what());
  }
}

ExperimentConfig parse_config_text(std::string_view text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(std::string_view(raw).substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
    }
    seen[key] = line_no;
    apply_setting(cfg, key, value, where);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path.string());
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "': expected key=value");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)),
                "override '" + std::string(assignment) + "'");
}

std::string format_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += k.name + "=" + k.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

}  // namespace rlaux
