#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bae/advantage.hpp"
#include "bae/augment.hpp"
#include "bae/config.hpp"
#include "bae/envs.hpp"
#include "bae/policy.hpp"
#include "bae/ppo.hpp"

namespace bae {

struct ExperimentConfig {
  std::string env_name = "confounded_grid";
  EnvOptions env;
  std::int64_t train_levels = 20;
  std::int64_t test_start = 10000;
  std::int64_t test_count = 1000;

  std::size_t n_steps = 512;
  AdvantageConfig adv;
  AugmentationSpec aug;
  PPOConfig ppo;
  std::vector<std::size_t> hidden{256, 256};
  TrunkMode trunks = TrunkMode::kSeparate;
  Activation activation = Activation::kTanh;

  std::uint64_t total_steps = 200000;
  std::uint64_t eval_interval = 20000;
  std::size_t eval_episodes = 32;
  std::size_t train_return_window = 10;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs";

  /// Defaults for an environment and method, then `kv` overrides.
  /// Unknown keys and invalid values raise ConfigError.
  static ExperimentConfig from_key_values(const KeyValueConfig& kv);
  static ExperimentConfig defaults(const std::string& env_name, const std::string& method);
  KeyValueConfig to_key_values() const;
  void validate() const;

  std::string method() const { return to_string(ppo.method); }
  NetSpec net_spec(const EnvSpec& spec) const;
};

/// Names of every recognized config key.
const std::vector<std::string>& config_keys();

struct MetricsRow {
  std::uint64_t global_step = 0;
  std::string method;
  std::uint64_t seed = 0;
  double train_return = 0.0;
  double test_return = 0.0;
  double test_return_std = 0.0;
  double test_return_greedy = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double wall_seconds = 0.0;  // written to the timing sidecar, not the metrics CSV
};

inline constexpr int kMetricsSchemaVersion = 1;
std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);
std::vector<MetricsRow> read_metrics(const std::string& path);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
};

/// Runs `episodes` episodes on levels drawn uniformly from [first, first + count).
/// Parameters are never modified.
EvalResult evaluate(const ActorCritic& net, Env& env, const LevelSampler& levels,
                    std::size_t episodes, Rng& rng, bool greedy = false);

struct Checkpoint {
  KeyValueConfig config;
  ActorCritic net;
  Adam optimizer;
  std::uint64_t global_step = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const KeyValueConfig& config, const ActorCritic& net,
                     const Adam& opt, std::uint64_t global_step, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

struct RunResult {
  std::string metrics_path;
  std::string checkpoint_path;
  std::vector<MetricsRow> rows;
};

std::string run_basename(const ExperimentConfig& cfg, std::uint64_t seed);

/// Collect, transform, estimate advantages, update; until total_steps. Writes
/// one metrics CSV (plus timing sidecar and checkpoint) for this seed.
RunResult run(const ExperimentConfig& cfg, std::uint64_t seed);
/// All seeds in cfg.seeds.
std::vector<RunResult> run_all(const ExperimentConfig& cfg);

struct MethodSummary {
  std::string method;
  std::size_t runs = 0;
  double final_test_mean = 0.0, final_test_std = 0.0;
  double auc_mean = 0.0, auc_std = 0.0;
  double final_train_mean = 0.0, final_train_std = 0.0;
  double final_value_loss_mean = 0.0, final_value_loss_std = 0.0;
  double final_policy_loss_mean = 0.0, final_policy_loss_std = 0.0;
};

struct CompareReport {
  std::vector<MethodSummary> methods;
  std::vector<std::string> notes;
  std::string text() const;
  std::string csv() const;
  const MethodSummary* find(const std::string& method) const;
};

/// Aggregates final and area-under-curve test returns per method.
CompareReport compare(const std::vector<std::string>& metrics_files);

/// Quick oracle and gradient checks; prints one line per check.
bool selftest(std::ostream& out);

}  // namespace bae
