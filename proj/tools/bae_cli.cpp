#include <glob.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "bae/errors.hpp"
#include "bae/harness.hpp"

namespace {

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  return out;
}

bool is_metrics_csv(const std::string& path) {
  const std::string timing = ".timing.csv";
  return path.size() > 4 && path.ends_with(".csv") && !path.ends_with(timing);
}

int cmd_train(const std::string& config_path, const std::string& method, long long seed,
              const std::string& env, long long total_steps, const std::string& out) {
  bae::KeyValueConfig kv;
  if (!config_path.empty()) kv = bae::KeyValueConfig::load(config_path);
  if (!method.empty()) kv.set("ppo.method", method);
  if (!env.empty()) kv.set("env.name", env);
  if (total_steps >= 0) kv.set("run.total_steps", std::to_string(total_steps));
  if (seed >= 0) kv.set("run.seeds", std::to_string(seed));
  if (!out.empty()) kv.set("run.out_dir", out);
  if (!method.empty() && !kv.has("adv.method"))
    kv.set("adv.method", method == "bae" ? "bae" : "gae");
  const bae::ExperimentConfig cfg = bae::ExperimentConfig::from_key_values(kv);
  for (std::uint64_t s : cfg.seeds) {
    const bae::RunResult r = bae::run(cfg, s);
    std::printf("%s\n", r.metrics_path.c_str());
    if (!r.rows.empty()) {
      const auto& last = r.rows.back();
      std::printf("  step %llu  train %.4f  test %.4f (greedy %.4f)  value_loss %.4f\n",
                  static_cast<unsigned long long>(last.global_step), last.train_return, last.test_return,
                  last.test_return_greedy, last.value_loss);
    }
  }
  return 0;
}

int cmd_eval(const std::string& path, const std::string& which, long long episodes, long long seed) {
  bae::Checkpoint ck = bae::load_checkpoint(path);
  const bae::ExperimentConfig cfg = bae::ExperimentConfig::from_key_values(ck.config);
  auto env = bae::make_env(cfg.env_name, cfg.env);
  const bae::LevelSampler levels = which == "train" ? bae::LevelSampler(0, cfg.train_levels)
                                                    : bae::LevelSampler(cfg.test_start, cfg.test_count);
  const std::size_t n = episodes > 0 ? static_cast<std::size_t>(episodes) : cfg.eval_episodes;
  const std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : ck.seed;
  bae::Rng rng(s, bae::Stream::kEval);
  const bae::EvalResult stoch = bae::evaluate(ck.net, *env, levels, n, rng, false);
  const bae::EvalResult greedy = bae::evaluate(ck.net, *env, levels, n, rng, true);
  std::printf("levels=%s episodes=%zu step=%llu\n", which.c_str(), n,
              static_cast<unsigned long long>(ck.global_step));
  std::printf("stochastic mean %.6f std %.6f\n", stoch.mean, stoch.std);
  std::printf("greedy     mean %.6f std %.6f\n", greedy.mean, greedy.std);
  return 0;
}

int cmd_compare(const std::vector<std::string>& patterns, const std::string& out) {
  std::vector<std::string> files;
  for (const auto& p : patterns)
    for (auto& f : expand_glob(p))
      if (is_metrics_csv(f)) files.push_back(std::move(f));
  if (files.empty()) throw bae::ConfigError("compare: no metrics files match");
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  const bae::CompareReport report = bae::compare(files);
  std::cout << report.text();
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream(std::filesystem::path(out) / "summary.txt") << report.text();
    std::ofstream(std::filesystem::path(out) / "summary.csv") << report.csv();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bootstrap advantage estimation experiments"};
  app.require_subcommand(1);

  std::string config_path, method, env, out;
  long long seed = -1, total_steps = -1;
  auto* train = app.add_subcommand("train", "Train one run per seed");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--method", method, "gae|bae|rad|drac")
      ->check(CLI::IsMember({"gae", "bae", "rad", "drac"}));
  train->add_option("--seed", seed, "Single seed (overrides run.seeds)");
  train->add_option("--env", env, "chain|confounded_grid|distractor_control");
  train->add_option("--total-steps", total_steps, "Environment steps");
  train->add_option("--out", out, "Output directory");

  std::string ckpt, which = "test";
  long long episodes = -1, eval_seed = -1;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  ev->add_option("--levels", which, "test|train")->check(CLI::IsMember({"test", "train"}));
  ev->add_option("--episodes", episodes, "Episode count");
  ev->add_option("--seed", eval_seed, "Evaluation seed");

  std::vector<std::string> runs;
  std::string cmp_out;
  auto* cmp = app.add_subcommand("compare", "Summarize metrics files per method");
  cmp->add_option("--runs", runs, "Glob(s) of metrics CSV files")->required();
  cmp->add_option("--out", cmp_out, "Directory for summary.txt and summary.csv");

  auto* self = app.add_subcommand("selftest", "Gradient and oracle checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config_path, method, seed, env, total_steps, out);
    if (*ev) return cmd_eval(ckpt, which, episodes, eval_seed);
    if (*cmp) return cmd_compare(runs, cmp_out);
    if (*self) return bae::selftest(std::cout) ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
