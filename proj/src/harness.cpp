#include "bae/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "bae/errors.hpp"

namespace bae {

namespace {

std::string trunk_str(TrunkMode t) { return t == TrunkMode::kShared ? "shared" : "separate"; }
TrunkMode parse_trunks(const std::string& s) {
  if (s == "shared") return TrunkMode::kShared;
  if (s == "separate") return TrunkMode::kSeparate;
  throw ConfigError("net.trunks must be shared or separate, got '" + s + "'");
}
std::string activation_str(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }
Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("net.activation must be tanh or relu, got '" + s + "'");
}

ObsKind obs_kind_for(const std::string& env_name, const EnvOptions& opts) {
  return make_env(env_name, opts)->spec().obs_kind;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

template <typename T>
T non_negative(long long v, const std::string& key) {
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<T>(v);
}

double mean_of(const std::deque<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "env.name",          "env.chain_states",     "env.chain_max_steps", "env.grid_size",
      "env.grid_diamonds", "env.grid_max_steps",   "env.distractor_dims", "env.distractor_scale",
      "env.control_max_steps",
      "levels.train_count", "levels.test_start",   "levels.test_count",
      "rollout.n_steps",   "rollout.batch_size",   "rollout.epochs",
      "adv.method",        "adv.gamma",            "adv.lambda",          "adv.m",
      "adv.k",             "adv.normalize",
      "aug.kind",          "aug.alpha",            "aug.beta",            "aug.pad",
      "aug.box_min",       "aug.box_max",          "aug.sampling",
      "net.hidden",        "net.trunks",           "net.activation",
      "ppo.clip",          "ppo.vf_coef",          "ppo.ent_coef",        "ppo.lr",
      "ppo.max_grad_norm", "ppo.method",           "ppo.drac_coef",       "ppo.value_loss",
      "ppo.rad_recompute_logprob",
      "run.total_steps",   "run.eval_interval",    "run.eval_episodes",   "run.train_return_window",
      "run.seeds",         "run.out_dir",
  };
  return keys;
}

ExperimentConfig ExperimentConfig::defaults(const std::string& env_name, const std::string& method) {
  ExperimentConfig c;
  c.env_name = env_name;
  c.ppo.method = parse_ppo_method(method);
  c.adv.method = c.ppo.method == PpoMethod::kBae ? AdvMethod::kBae : AdvMethod::kGae;
  if (env_name == "chain") {
    c.train_levels = 1;
    c.test_start = 1;
    c.test_count = 1;
    c.n_steps = 128;
    c.ppo.batch_size = 32;
    c.ppo.epochs = 4;
    c.ppo.lr = 3e-4;
    c.hidden = {64, 64};
    c.total_steps = 50000;
    c.eval_interval = 5000;
    c.eval_episodes = 100;
  } else if (env_name == "confounded_grid") {
    c.n_steps = 512;
    c.ppo.batch_size = 128;
    c.ppo.epochs = 3;
    c.ppo.lr = 2.5e-4;
    c.hidden = {256, 256};
    c.total_steps = 200000;
    c.eval_interval = 20000;
  } else if (env_name == "distractor_control") {
    c.n_steps = 1024;
    c.ppo.batch_size = 64;
    c.ppo.epochs = 10;
    c.ppo.lr = 3e-4;
    c.ppo.ent_coef = 0.0;
    c.hidden = {64, 64};
    c.total_steps = 300000;
    c.eval_interval = 30000;
  } else {
    throw ConfigError("unknown environment '" + env_name + "'");
  }
  c.aug = default_augmentation(method, obs_kind_for(env_name, c.env));
  return c;
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.entries()) {
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig c = defaults(kv.get_string("env.name", "confounded_grid"),
                                kv.get_string("ppo.method", "gae"));

  auto& e = c.env;
  e.chain_states = static_cast<int>(kv.get_int("env.chain_states", e.chain_states));
  e.chain_max_steps = static_cast<int>(kv.get_int("env.chain_max_steps", e.chain_max_steps));
  e.grid_size = static_cast<int>(kv.get_int("env.grid_size", e.grid_size));
  e.grid_diamonds = static_cast<int>(kv.get_int("env.grid_diamonds", e.grid_diamonds));
  e.grid_max_steps = static_cast<int>(kv.get_int("env.grid_max_steps", e.grid_max_steps));
  e.distractor_dims = static_cast<int>(kv.get_int("env.distractor_dims", e.distractor_dims));
  e.distractor_scale = kv.get_double("env.distractor_scale", e.distractor_scale);
  e.control_max_steps = static_cast<int>(kv.get_int("env.control_max_steps", e.control_max_steps));

  c.train_levels = kv.get_int("levels.train_count", c.train_levels);
  c.test_start = kv.get_int("levels.test_start", c.test_start);
  c.test_count = kv.get_int("levels.test_count", c.test_count);

  c.n_steps = non_negative<std::size_t>(kv.get_int("rollout.n_steps", static_cast<long long>(c.n_steps)),
                                        "rollout.n_steps");
  c.ppo.batch_size = non_negative<std::size_t>(
      kv.get_int("rollout.batch_size", static_cast<long long>(c.ppo.batch_size)), "rollout.batch_size");
  c.ppo.epochs = non_negative<std::size_t>(
      kv.get_int("rollout.epochs", static_cast<long long>(c.ppo.epochs)), "rollout.epochs");

  if (auto m = kv.get("adv.method")) {
    std::size_t k = c.adv.k;
    c.adv.method = parse_adv_method(*m, &k);
    c.adv.k = k;
  }
  c.adv.gamma = kv.get_double("adv.gamma", c.adv.gamma);
  c.adv.lambda = kv.get_double("adv.lambda", c.adv.lambda);
  c.adv.m = non_negative<std::size_t>(kv.get_int("adv.m", static_cast<long long>(c.adv.m)), "adv.m");
  c.adv.k = non_negative<std::size_t>(kv.get_int("adv.k", static_cast<long long>(c.adv.k)), "adv.k");
  c.adv.normalize = kv.get_bool("adv.normalize", c.adv.normalize);

  if (auto k = kv.get("aug.kind")) c.aug.kind = parse_aug_kind(*k);
  c.aug.alpha = kv.get_double("aug.alpha", c.aug.alpha);
  c.aug.beta = kv.get_double("aug.beta", c.aug.beta);
  c.aug.pad = static_cast<int>(kv.get_int("aug.pad", c.aug.pad));
  c.aug.box_min = kv.get_double("aug.box_min", c.aug.box_min);
  c.aug.box_max = kv.get_double("aug.box_max", c.aug.box_max);
  if (auto s = kv.get("aug.sampling")) c.aug.sampling = parse_aug_sampling(*s);

  if (kv.has("net.hidden")) {
    c.hidden.clear();
    for (long long h : kv.get_int_list("net.hidden", {}))
      c.hidden.push_back(non_negative<std::size_t>(h, "net.hidden"));
  }
  if (auto t = kv.get("net.trunks")) c.trunks = parse_trunks(*t);
  if (auto a = kv.get("net.activation")) c.activation = parse_activation(*a);

  c.ppo.clip = kv.get_double("ppo.clip", c.ppo.clip);
  c.ppo.vf_coef = kv.get_double("ppo.vf_coef", c.ppo.vf_coef);
  c.ppo.ent_coef = kv.get_double("ppo.ent_coef", c.ppo.ent_coef);
  c.ppo.lr = kv.get_double("ppo.lr", c.ppo.lr);
  c.ppo.max_grad_norm = kv.get_double("ppo.max_grad_norm", c.ppo.max_grad_norm);
  c.ppo.drac_coef = kv.get_double("ppo.drac_coef", c.ppo.drac_coef);
  if (auto v = kv.get("ppo.value_loss")) c.ppo.value_loss = parse_value_loss(*v);
  c.ppo.rad_recompute_logprob = kv.get_bool("ppo.rad_recompute_logprob", c.ppo.rad_recompute_logprob);

  c.total_steps = non_negative<std::uint64_t>(
      kv.get_int("run.total_steps", static_cast<long long>(c.total_steps)), "run.total_steps");
  c.eval_interval = non_negative<std::uint64_t>(
      kv.get_int("run.eval_interval", static_cast<long long>(c.eval_interval)), "run.eval_interval");
  c.eval_episodes = non_negative<std::size_t>(
      kv.get_int("run.eval_episodes", static_cast<long long>(c.eval_episodes)), "run.eval_episodes");
  c.train_return_window = non_negative<std::size_t>(
      kv.get_int("run.train_return_window", static_cast<long long>(c.train_return_window)),
      "run.train_return_window");
  if (kv.has("run.seeds")) {
    c.seeds.clear();
    for (long long s : kv.get_int_list("run.seeds", {}))
      c.seeds.push_back(non_negative<std::uint64_t>(s, "run.seeds"));
  }
  c.out_dir = kv.get_string("run.out_dir", c.out_dir);

  c.validate();
  return c;
}

KeyValueConfig ExperimentConfig::to_key_values() const {
  KeyValueConfig kv;
  kv.set("env.name", env_name);
  kv.set("env.chain_states", std::to_string(env.chain_states));
  kv.set("env.chain_max_steps", std::to_string(env.chain_max_steps));
  kv.set("env.grid_size", std::to_string(env.grid_size));
  kv.set("env.grid_diamonds", std::to_string(env.grid_diamonds));
  kv.set("env.grid_max_steps", std::to_string(env.grid_max_steps));
  kv.set("env.distractor_dims", std::to_string(env.distractor_dims));
  kv.set("env.distractor_scale", format_double(env.distractor_scale));
  kv.set("env.control_max_steps", std::to_string(env.control_max_steps));
  kv.set("levels.train_count", std::to_string(train_levels));
  kv.set("levels.test_start", std::to_string(test_start));
  kv.set("levels.test_count", std::to_string(test_count));
  kv.set("rollout.n_steps", std::to_string(n_steps));
  kv.set("rollout.batch_size", std::to_string(ppo.batch_size));
  kv.set("rollout.epochs", std::to_string(ppo.epochs));
  kv.set("adv.method", to_string(adv.method));
  kv.set("adv.gamma", format_double(adv.gamma));
  kv.set("adv.lambda", format_double(adv.lambda));
  kv.set("adv.m", std::to_string(adv.m));
  kv.set("adv.k", std::to_string(adv.k));
  kv.set("adv.normalize", adv.normalize ? "true" : "false");
  kv.set("aug.kind", to_string(aug.kind));
  kv.set("aug.alpha", format_double(aug.alpha));
  kv.set("aug.beta", format_double(aug.beta));
  kv.set("aug.pad", std::to_string(aug.pad));
  kv.set("aug.box_min", format_double(aug.box_min));
  kv.set("aug.box_max", format_double(aug.box_max));
  kv.set("aug.sampling", to_string(aug.sampling));
  kv.set("net.hidden", join(hidden));
  kv.set("net.trunks", trunk_str(trunks));
  kv.set("net.activation", activation_str(activation));
  kv.set("ppo.clip", format_double(ppo.clip));
  kv.set("ppo.vf_coef", format_double(ppo.vf_coef));
  kv.set("ppo.ent_coef", format_double(ppo.ent_coef));
  kv.set("ppo.lr", format_double(ppo.lr));
  kv.set("ppo.max_grad_norm", format_double(ppo.max_grad_norm));
  kv.set("ppo.method", to_string(ppo.method));
  kv.set("ppo.drac_coef", format_double(ppo.drac_coef));
  kv.set("ppo.value_loss", to_string(ppo.value_loss));
  kv.set("ppo.rad_recompute_logprob", ppo.rad_recompute_logprob ? "true" : "false");
  kv.set("run.total_steps", std::to_string(total_steps));
  kv.set("run.eval_interval", std::to_string(eval_interval));
  kv.set("run.eval_episodes", std::to_string(eval_episodes));
  kv.set("run.train_return_window", std::to_string(train_return_window));
  kv.set("run.seeds", join(seeds));
  kv.set("run.out_dir", out_dir);
  return kv;
}

void ExperimentConfig::validate() const {
  const auto probe = make_env(env_name, env);
  if (train_levels < 1) throw ConfigError("levels.train_count must be >= 1");
  if (test_count < 1) throw ConfigError("levels.test_count must be >= 1");
  if (test_start < 0) throw ConfigError("level ids must be non-negative");
  const bool disjoint = test_start >= train_levels || test_start + test_count <= 0;
  if (!disjoint)
    throw ConfigError("train levels [0, " + std::to_string(train_levels) + ") overlap test levels [" +
                      std::to_string(test_start) + ", " + std::to_string(test_start + test_count) + ")");
  if (n_steps < 2) throw ConfigError("rollout.n_steps must be >= 2");
  if (total_steps < n_steps)
    throw ConfigError("run.total_steps (" + std::to_string(total_steps) + ") must be >= rollout.n_steps (" +
                      std::to_string(n_steps) + ")");
  if (ppo.batch_size == 0 || n_steps % ppo.batch_size != 0)
    throw ConfigError("rollout.batch_size must divide rollout.n_steps");
  if (eval_interval == 0) throw ConfigError("run.eval_interval must be >= 1");
  if (eval_episodes == 0) throw ConfigError("run.eval_episodes must be >= 1");
  if (train_return_window == 0) throw ConfigError("run.train_return_window must be >= 1");
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (hidden.empty()) throw ConfigError("net.hidden must list at least one layer");
  for (std::size_t h : hidden)
    if (h == 0) throw ConfigError("net.hidden layer widths must be positive");
  adv.validate();
  ppo.validate();
  aug.validate();
  if (ppo.method == PpoMethod::kBae && adv.method != AdvMethod::kBae)
    throw ConfigError("ppo.method=bae requires adv.method=bae");
  if (ppo.method != PpoMethod::kBae && adv.method == AdvMethod::kBae)
    throw ConfigError("adv.method=bae requires ppo.method=bae");
  const bool image_only = aug.kind == AugKind::kCutoutColor || aug.kind == AugKind::kRandomCrop;
  if (image_only && probe->spec().obs_kind != ObsKind::kImage)
    throw ConfigError("aug.kind=" + to_string(aug.kind) + " needs image observations; " + env_name +
                      " emits vectors");
  if (aug.kind == AugKind::kAmplitudeScale && probe->spec().obs_kind != ObsKind::kVector)
    throw ConfigError("aug.kind=amplitude_scale needs vector observations");
}

NetSpec ExperimentConfig::net_spec(const EnvSpec& spec) const {
  NetSpec n;
  n.obs_dim = spec.obs_size();
  n.action = spec.action;
  n.hidden = hidden;
  n.trunks = trunks;
  n.activation = activation;
  return n;
}

EvalResult evaluate(const ActorCritic& net, Env& env, const LevelSampler& levels,
                    std::size_t episodes, Rng& rng, bool greedy) {
  if (episodes < 1) throw ContractError("evaluate: episodes must be >= 1");
  EvalResult r;
  r.returns.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    Obs obs = env.reset(levels.sample(rng));
    double ret = 0.0;
    while (true) {
      const PolicyOutput out = net.act(obs, rng, greedy);
      StepResult s = env.step(out.action);
      ret += s.reward;
      if (s.terminated || s.truncated) break;
      obs = std::move(s.obs);
    }
    r.returns.push_back(ret);
  }
  r.mean = std::accumulate(r.returns.begin(), r.returns.end(), 0.0) / static_cast<double>(episodes);
  double ss = 0.0;
  for (double x : r.returns) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(episodes));
  return r;
}

std::string run_basename(const ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.env_name + "_" + cfg.method() + "_seed" + std::to_string(seed);
}

RunResult run(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());

  RunResult result;
  const std::string base = (fs::path(cfg.out_dir) / run_basename(cfg, seed)).string();
  result.metrics_path = base + ".csv";
  result.checkpoint_path = base + ".ckpt";
  std::ofstream csv(result.metrics_path, std::ios::trunc);
  std::ofstream timing(base + ".timing.csv", std::ios::trunc);
  if (!csv || !timing) throw ConfigError("cannot write metrics under '" + cfg.out_dir + "'");
  csv << metrics_header() << "\n" << std::flush;
  timing << "global_step,wall_seconds\n" << std::flush;

  Rng env_rng(seed, Stream::kEnv);
  Rng policy_rng(seed, Stream::kPolicy);
  Rng aug_rng(seed, Stream::kAugment);
  Rng eval_rng(seed, Stream::kEval);
  Rng init_rng(seed, Stream::kInit);

  auto env = make_env(cfg.env_name, cfg.env);
  auto eval_env = make_env(cfg.env_name, cfg.env);
  ActorCritic net = ActorCritic::init(cfg.net_spec(env->spec()), init_rng);
  Adam opt(net.params());
  RolloutCollector collector(*env, LevelSampler(0, cfg.train_levels));
  const LevelSampler test_levels(cfg.test_start, cfg.test_count);

  std::size_t n_aug = 0;
  if (cfg.ppo.method == PpoMethod::kBae) n_aug = cfg.adv.m;
  if (cfg.ppo.method == PpoMethod::kRad || cfg.ppo.method == PpoMethod::kDrac) n_aug = 1;

  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t iterations = cfg.total_steps / cfg.n_steps;
  std::uint64_t global_step = 0;
  std::uint64_t next_eval = cfg.eval_interval;
  std::deque<double> recent;

  for (std::uint64_t it = 1; it <= iterations; ++it) {
    const RolloutBuffer buf = collector.collect(net, cfg.n_steps, env_rng, policy_rng);
    global_step += cfg.n_steps;
    for (double r : buf.completed_episode_returns) {
      recent.push_back(r);
      if (recent.size() > cfg.train_return_window) recent.pop_front();
    }

    std::vector<RolloutBuffer> aug;
    aug.reserve(n_aug);
    for (std::size_t i = 0; i < n_aug; ++i) aug.push_back(apply_to_buffer(cfg.aug, buf, aug_rng));

    const bool bae_method = cfg.ppo.method == PpoMethod::kBae;
    const ValueTable table =
        build_value_table(net, buf, bae_method ? std::span<const RolloutBuffer>(aug)
                                               : std::span<const RolloutBuffer>());
    AdvantageEstimate est = estimate_advantages(table, buf.trajectory(), cfg.adv);
    if (cfg.adv.normalize) est = normalize_advantages(std::move(est));

    UpdateStats stats;
    try {
      stats = update(net, opt, buf, aug, est, cfg.ppo, policy_rng);
    } catch (const NumericalError&) {
      csv.flush();
      timing.flush();
      throw;
    }

    if (global_step >= next_eval || it == iterations) {
      while (next_eval <= global_step) next_eval += cfg.eval_interval;
      const EvalResult stoch = evaluate(net, *eval_env, test_levels, cfg.eval_episodes, eval_rng, false);
      const EvalResult greedy = evaluate(net, *eval_env, test_levels, cfg.eval_episodes, eval_rng, true);
      MetricsRow row;
      row.global_step = global_step;
      row.method = cfg.method();
      row.seed = seed;
      row.train_return = mean_of(recent);
      row.test_return = stoch.mean;
      row.test_return_std = stoch.std;
      row.test_return_greedy = greedy.mean;
      row.policy_loss = stats.policy_loss;
      row.value_loss = stats.value_loss;
      row.entropy = stats.entropy;
      row.approx_kl = stats.approx_kl;
      row.clip_fraction = stats.clip_fraction;
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      csv << format_metrics_row(row) << "\n" << std::flush;
      char wall[64];
      std::snprintf(wall, sizeof(wall), "%.3f", row.wall_seconds);
      timing << global_step << "," << wall << "\n" << std::flush;
      result.rows.push_back(std::move(row));
    }
  }

  save_checkpoint(result.checkpoint_path, cfg.to_key_values(), net, opt, global_step, seed);
  return result;
}

std::vector<RunResult> run_all(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RunResult> out;
  for (std::uint64_t s : cfg.seeds) out.push_back(run(cfg, s));
  return out;
}

}  // namespace bae
