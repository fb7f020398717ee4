#pragma once

// Flat `key = value` experiment configuration. `#` starts a comment; unknown
// keys and malformed values are rejected with the offending line number.
// Overrides given on the command line use the same syntax and win over the file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rlaux/data/synthetic.hpp"
#include "rlaux/env.hpp"
#include "rlaux/nn/optim.hpp"
#include "rlaux/ppo.hpp"

namespace rlaux {

enum class Method { RlAux, WaRlAux, SingleTask, OracleAux, RandomAux };
enum class DataSource { Synthetic, Tensor, Cifar100 };

std::string to_string(Method m);
Method parse_method(std::string_view text);
std::string to_string(DataSource s);

struct ExperimentConfig {
  Method method = Method::RlAux;
  int epochs = 200;  // agent and main episodes together
  int early_stop_patience = 25;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir = "runs";
  bool record_wall_clock = false;

  int hierarchy_factor = 5;  // ψ
  EnvConfig env;
  nn::SgdConfig sgd;
  PpoConfig ppo;
  std::vector<int> extractor_hidden{128};
  int feature_dim = 256;
  int head_hidden = 512;
  std::vector<int> policy_hidden{128};
  int policy_feature_dim = 256;

  DataSource data_source = DataSource::Synthetic;
  std::string data_path;       // tensor: directory from gen-data; cifar100: directory with train.bin/test.bin
  std::string superclass_map;  // empty: built-in map
  data::SyntheticSpec synthetic;

  bool is_agent_method() const { return method == Method::RlAux || method == Method::WaRlAux; }
  void validate() const;
};

ExperimentConfig parse_config_text(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies one `key=value` pair; `where` prefixes error messages.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value, const std::string& where);
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

/// Every key in canonical order, one `key=value` per line. Parsing the output
/// reproduces the config.
std::string format_config(const ExperimentConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace rlaux
