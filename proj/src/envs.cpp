#include "bae/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bae/errors.hpp"
#include "bae/rng.hpp"

namespace bae {

Obs Obs::image(std::size_t c, std::size_t h, std::size_t w, double fill) {
  Obs o;
  o.kind = ObsKind::kImage;
  o.channels = c;
  o.height = h;
  o.width = w;
  o.data.assign(c * h * w, fill);
  return o;
}

Obs Obs::vector(std::vector<double> values) {
  Obs o;
  o.kind = ObsKind::kVector;
  o.data = std::move(values);
  return o;
}

std::size_t EnvSpec::obs_size() const {
  return std::accumulate(obs_shape.begin(), obs_shape.end(), std::size_t{1},
                         std::multiplies<>());
}

bool Env::tick_and_check_truncation(bool terminated) {
  ++elapsed_;
  const bool truncated = !terminated && elapsed_ >= spec().max_episode_length;
  if (terminated || truncated) active_ = false;
  return truncated;
}

void Env::require_active() const {
  if (!active_) throw ContractError(spec().name + ": step() called without an active episode");
}

namespace {

void require_level(LevelSeed level) {
  if (level.id < 0) throw ContractError("reset: level must be >= 0, got " + std::to_string(level.id));
}

std::int64_t discrete_action(const Action& a, std::size_t n, const std::string& env) {
  if (a.index < 0 || a.index >= static_cast<std::int64_t>(n)) {
    throw ContractError(env + ": discrete action " + std::to_string(a.index) + " outside [0, " +
                        std::to_string(n) + ")");
  }
  return a.index;
}

std::uint64_t level_key(LevelSeed level, std::uint64_t salt) {
  return splitmix64(static_cast<std::uint64_t>(level.id) * 0x2545F4914F6CDD1DULL ^ salt);
}

}  // namespace

std::unique_ptr<Env> make_env(const std::string& name, const EnvOptions& opts) {
  if (name == "chain") return std::make_unique<ChainMDP>(opts.chain_states, opts.chain_max_steps);
  if (name == "confounded_grid")
    return std::make_unique<ConfoundedGrid>(opts.grid_size, opts.grid_diamonds, opts.grid_max_steps);
  if (name == "distractor_control")
    return std::make_unique<DistractorControl>(opts.distractor_dims, opts.distractor_scale,
                                               opts.control_max_steps);
  throw ConfigError("unknown environment '" + name +
                    "' (expected chain, confounded_grid or distractor_control)");
}

// ------------------------------------------------------------------ ChainMDP

ChainMDP::ChainMDP(int n_states, int max_steps) : n_(n_states) {
  if (n_states < 1) throw ConfigError("chain: need at least one state");
  if (max_steps < 0) throw ConfigError("chain: max_steps must be >= 0");
  spec_.name = "chain";
  spec_.obs_kind = ObsKind::kVector;
  spec_.obs_shape = {static_cast<std::size_t>(n_)};
  spec_.action = ActionSpace{ActionKind::kDiscrete, 2, 0, 0.0, 0.0};
  spec_.max_episode_length = max_steps == 0 ? 4 * n_ : max_steps;
}

Obs ChainMDP::observe(int s) const {
  std::vector<double> v(static_cast<std::size_t>(n_), 0.0);
  if (s >= 0 && s < n_) v[static_cast<std::size_t>(s)] = 1.0;
  return Obs::vector(std::move(v));
}

Obs ChainMDP::reset(LevelSeed level) {
  require_level(level);
  begin_episode();
  state_ = 0;
  return observe(state_);
}

void ChainMDP::set_state(int s) {
  if (s < 0 || s >= n_) throw ContractError("chain: set_state outside nonterminal range");
  state_ = s;
}

int ChainMDP::next_state(int s, std::int64_t action) const {
  if (s >= n_) return n_;
  return action == kRight ? s + 1 : std::max(0, s - 1);
}

double ChainMDP::reward(int s, std::int64_t action) const {
  return (s < n_ && next_state(s, action) == n_) ? 1.0 : 0.0;
}

StepResult ChainMDP::step(const Action& action) {
  require_active();
  const auto a = discrete_action(action, 2, spec_.name);
  StepResult res;
  res.reward = reward(state_, a);
  state_ = next_state(state_, a);
  res.terminated = state_ == n_;
  res.truncated = tick_and_check_truncation(res.terminated);
  res.obs = observe(state_);
  return res;
}

namespace {

const ChainMDP& as_chain(const Env& env) {
  const auto* chain = dynamic_cast<const ChainMDP*>(&env);
  if (!chain) throw UnsupportedError("exact values are only available for the chain environment");
  return *chain;
}

void check_policy(const ChainMDP& chain, const TabularPolicy& policy, double gamma) {
  if (policy.size() != static_cast<std::size_t>(chain.num_states()))
    throw ContractError("chain oracle: policy must list one distribution per nonterminal state");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("chain oracle: gamma outside [0, 1]");
}

std::vector<double> backup(const ChainMDP& chain, const TabularPolicy& policy, double gamma,
                           const std::vector<double>& v) {
  const int n = chain.num_states();
  std::vector<double> out(static_cast<std::size_t>(n));
  auto value_of = [&](int s) { return s >= n ? 0.0 : v[static_cast<std::size_t>(s)]; };
  for (int s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::int64_t a = 0; a < 2; ++a) {
      acc += policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] *
             (chain.reward(s, a) + gamma * value_of(chain.next_state(s, a)));
    }
    out[static_cast<std::size_t>(s)] = acc;
  }
  return out;
}

}  // namespace

double bellman_residual(const Env& env, const TabularPolicy& policy, double gamma,
                        const std::vector<double>& values) {
  const auto& chain = as_chain(env);
  check_policy(chain, policy, gamma);
  const auto next = backup(chain, policy, gamma, values);
  double r = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) r = std::max(r, std::fabs(next[i] - values[i]));
  return r;
}

std::vector<double> exact_values(const Env& env, const TabularPolicy& policy, double gamma) {
  const auto& chain = as_chain(env);
  check_policy(chain, policy, gamma);
  std::vector<double> v(policy.size(), 0.0);
  constexpr long kMaxSweeps = 50'000'000;
  for (long it = 0; it < kMaxSweeps; ++it) {
    auto next = backup(chain, policy, gamma, v);
    double residual = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) residual = std::max(residual, std::fabs(next[i] - v[i]));
    v = std::move(next);
    if (residual < 1e-13) return v;
  }
  throw NumericalError("exact_values: value iteration did not converge");
}

std::vector<std::array<double, 2>> exact_advantages(const Env& env, const TabularPolicy& policy,
                                                    double gamma) {
  const auto& chain = as_chain(env);
  const auto v = exact_values(env, policy, gamma);
  const int n = chain.num_states();
  std::vector<std::array<double, 2>> adv(v.size());
  for (int s = 0; s < n; ++s) {
    for (std::int64_t a = 0; a < 2; ++a) {
      const int sp = chain.next_state(s, a);
      const double vn = sp >= n ? 0.0 : v[static_cast<std::size_t>(sp)];
      adv[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] =
          chain.reward(s, a) + gamma * vn - v[static_cast<std::size_t>(s)];
    }
  }
  return adv;
}

std::vector<double> finite_horizon_values(const Env& env, const TabularPolicy& policy,
                                          double gamma, int horizon) {
  const auto& chain = as_chain(env);
  check_policy(chain, policy, gamma);
  if (horizon < 0) throw ContractError("finite_horizon_values: negative horizon");
  std::vector<double> v(policy.size(), 0.0);
  for (int h = 0; h < horizon; ++h) v = backup(chain, policy, gamma, v);
  return v;
}

// ------------------------------------------------------------ ConfoundedGrid

const std::array<std::array<double, 3>, ConfoundedGrid::kPaletteSize>& ConfoundedGrid::palette() {
  // Every channel stays below 1 so agent and diamond colors are never reused.
  static const auto table = [] {
    std::array<std::array<double, 3>, kPaletteSize> p{};
    constexpr std::array<double, 4> reds{0.0, 0.2, 0.4, 0.6};
    constexpr std::array<double, 3> greens{0.1, 0.4, 0.7};
    constexpr std::array<double, 2> blues{0.15, 0.55};
    std::size_t i = 0;
    for (double r : reds)
      for (double g : greens)
        for (double b : blues) p[i++] = {r, g, b};
    return p;
  }();
  return table;
}

ConfoundedGrid::ConfoundedGrid(int size, int diamonds, int max_steps)
    : size_(size), num_diamonds_(diamonds) {
  if (size < 2) throw ConfigError("confounded_grid: size must be >= 2");
  if (diamonds < 1 || diamonds >= size * size)
    throw ConfigError("confounded_grid: diamond count must be in [1, size^2)");
  if (max_steps < 1) throw ConfigError("confounded_grid: max_steps must be >= 1");
  spec_.name = "confounded_grid";
  spec_.obs_kind = ObsKind::kImage;
  spec_.obs_shape = {3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)};
  spec_.action = ActionSpace{ActionKind::kDiscrete, kNumActions, 0, 0.0, 0.0};
  spec_.max_episode_length = max_steps;
}

ConfoundedGrid::Layout ConfoundedGrid::layout_for_level(LevelSeed level) const {
  require_level(level);
  Rng rng(level_key(level, 0x6772696400000000ULL));
  const std::size_t cells = static_cast<std::size_t>(size_ * size_);
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  Layout l;
  l.agent_x = static_cast<int>(order[0] % static_cast<std::size_t>(size_));
  l.agent_y = static_cast<int>(order[0] / static_cast<std::size_t>(size_));
  for (int d = 0; d < num_diamonds_; ++d) {
    const std::size_t c = order[static_cast<std::size_t>(d) + 1];
    l.diamonds.emplace_back(static_cast<int>(c % static_cast<std::size_t>(size_)),
                            static_cast<int>(c / static_cast<std::size_t>(size_)));
  }
  l.background = static_cast<std::size_t>(level.id % static_cast<std::int64_t>(kPaletteSize));
  return l;
}

Obs ConfoundedGrid::reset(LevelSeed level) { return reset_with_layout(layout_for_level(level)); }

Obs ConfoundedGrid::reset_with_layout(const Layout& layout) {
  if (layout.background >= kPaletteSize) throw ContractError("confounded_grid: bad background index");
  auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < size_ && y < size_; };
  if (!inside(layout.agent_x, layout.agent_y)) throw ContractError("confounded_grid: agent off grid");
  for (const auto& [x, y] : layout.diamonds)
    if (!inside(x, y)) throw ContractError("confounded_grid: diamond off grid");
  layout_ = layout;
  begin_episode();
  return render();
}

Obs ConfoundedGrid::render() const {
  const auto n = static_cast<std::size_t>(size_);
  Obs o = Obs::image(3, n, n);
  const auto& bg = palette()[layout_.background];
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) o.at(c, y, x) = bg[c];
  for (const auto& [x, y] : layout_.diamonds)
    for (std::size_t c = 0; c < 3; ++c)
      o.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = kDiamondColor[c];
  for (std::size_t c = 0; c < 3; ++c)
    o.at(c, static_cast<std::size_t>(layout_.agent_y), static_cast<std::size_t>(layout_.agent_x)) =
        kAgentColor[c];
  return o;
}

StepResult ConfoundedGrid::step(const Action& action) {
  require_active();
  const auto a = discrete_action(action, kNumActions, spec_.name);
  static constexpr std::array<int, 4> dx{0, 0, -1, 1};
  static constexpr std::array<int, 4> dy{-1, 1, 0, 0};
  const int nx = std::clamp(layout_.agent_x + dx[static_cast<std::size_t>(a)], 0, size_ - 1);
  const int ny = std::clamp(layout_.agent_y + dy[static_cast<std::size_t>(a)], 0, size_ - 1);
  layout_.agent_x = nx;
  layout_.agent_y = ny;

  StepResult res;
  auto hit = std::find(layout_.diamonds.begin(), layout_.diamonds.end(), std::make_pair(nx, ny));
  if (hit != layout_.diamonds.end()) {
    layout_.diamonds.erase(hit);
    res.reward = 1.0;
  }
  res.terminated = layout_.diamonds.empty();
  res.truncated = tick_and_check_truncation(res.terminated);
  res.obs = render();
  return res;
}

// --------------------------------------------------------- DistractorControl

DistractorControl::DistractorControl(int distractor_dims, double distractor_scale, int max_steps)
    : dims_(distractor_dims), scale_(distractor_scale) {
  if (distractor_dims < 0) throw ConfigError("distractor_control: negative distractor dims");
  if (max_steps < 1) throw ConfigError("distractor_control: max_steps must be >= 1");
  spec_.name = "distractor_control";
  spec_.obs_kind = ObsKind::kVector;
  spec_.obs_shape = {static_cast<std::size_t>(2 + dims_)};
  spec_.action = ActionSpace{ActionKind::kContinuous, 0, 1, -1.0, 1.0};
  spec_.max_episode_length = max_steps;
}

Obs DistractorControl::observe() const {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(2 + dims_));
  v.push_back(pos_);
  v.push_back(vel_);
  v.insert(v.end(), distractors_.begin(), distractors_.end());
  return Obs::vector(std::move(v));
}

Obs DistractorControl::reset(LevelSeed level) {
  require_level(level);
  Rng rng(level_key(level, 0x6374726c00000000ULL));
  pos_ = rng.uniform(-1.0, 1.0);
  vel_ = 0.0;
  distractors_.resize(static_cast<std::size_t>(dims_));
  for (double& d : distractors_) d = scale_ * rng.uniform(-1.0, 1.0);
  begin_episode();
  return observe();
}

StepResult DistractorControl::step(const Action& action) {
  require_active();
  if (action.values.size() != 1)
    throw ContractError("distractor_control: expected a 1-dimensional continuous action");
  const double force = std::clamp(action.values[0], spec_.action.low, spec_.action.high);
  vel_ = 0.9 * (vel_ + 0.1 * force);
  pos_ = std::clamp(pos_ + 0.1 * vel_, -2.0, 2.0);
  StepResult res;
  res.reward = -std::fabs(pos_ - kTarget);
  res.terminated = false;
  res.truncated = tick_and_check_truncation(false);
  res.obs = observe();
  return res;
}

}  // namespace bae
