#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace bae {

enum class ObsKind { kImage, kVector };

/// Observation: a channels x height x width image in [0,1] or a flat vector.
struct Obs {
  ObsKind kind = ObsKind::kVector;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  static Obs image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0);
  static Obs vector(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  bool same_shape(const Obs& o) const {
    return kind == o.kind && channels == o.channels && height == o.height && width == o.width &&
           data.size() == o.data.size();
  }
  bool operator==(const Obs&) const = default;
};

enum class ActionKind { kDiscrete, kContinuous };

struct ActionSpace {
  ActionKind kind = ActionKind::kDiscrete;
  std::size_t n = 0;    // discrete action count
  std::size_t dim = 0;  // continuous dimensionality
  double low = -1.0;
  double high = 1.0;
};

struct Action {
  std::int64_t index = -1;
  std::vector<double> values;

  static Action discrete(std::int64_t i) { return Action{i, {}}; }
  static Action continuous(std::vector<double> v) { return Action{-1, std::move(v)}; }
  bool operator==(const Action&) const = default;
};

struct StepResult {
  Obs obs;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

struct LevelSeed {
  std::int64_t id = 0;
};

struct EnvSpec {
  std::string name;
  ObsKind obs_kind = ObsKind::kVector;
  std::vector<std::size_t> obs_shape;
  ActionSpace action;
  int max_episode_length = 1;

  std::size_t obs_size() const;
};

struct EnvOptions {
  int chain_states = 5;
  int chain_max_steps = 0;  // 0 -> 4 * chain_states
  int grid_size = 9;
  int grid_diamonds = 3;
  int grid_max_steps = 50;
  int distractor_dims = 4;
  double distractor_scale = 1.0;
  int control_max_steps = 200;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  /// Starts an episode on a level. Same level -> same initial state and confounder.
  virtual Obs reset(LevelSeed level) = 0;
  virtual StepResult step(const Action& action) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
  int elapsed_steps() const { return elapsed_; }

 protected:
  void begin_episode() {
    elapsed_ = 0;
    active_ = true;
  }
  // Advances the step counter and reports whether the time limit was hit.
  bool tick_and_check_truncation(bool terminated);
  void require_active() const;

  int elapsed_ = 0;
  bool active_ = false;
};

/// "chain", "confounded_grid" or "distractor_control"; ConfigError otherwise.
std::unique_ptr<Env> make_env(const std::string& name, const EnvOptions& opts = {});

/// Chain of n nonterminal states 0..n-1 and an absorbing goal at index n.
/// Actions: 0 = left (reflecting at 0), 1 = right. Reward 1 on entering the goal.
class ChainMDP final : public Env {
 public:
  static constexpr std::int64_t kLeft = 0;
  static constexpr std::int64_t kRight = 1;

  explicit ChainMDP(int n_states = 5, int max_steps = 0);

  const EnvSpec& spec() const override { return spec_; }
  Obs reset(LevelSeed level) override;
  StepResult step(const Action& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<ChainMDP>(*this); }

  int num_states() const { return n_; }
  int goal() const { return n_; }
  int state() const { return state_; }
  /// Places the agent at a nonterminal state mid-episode (oracle tests).
  void set_state(int s);

  int next_state(int s, std::int64_t action) const;
  double reward(int s, std::int64_t action) const;
  Obs observe(int s) const;

 private:
  int n_;
  int state_ = 0;
  EnvSpec spec_;
};

/// Per-state action probabilities {p(left), p(right)} for ChainMDP.
using TabularPolicy = std::vector<std::array<double, 2>>;

/// Infinite-horizon state values by value iteration (residual < 1e-12).
/// Throws UnsupportedError for environments that are not ChainMDP.
std::vector<double> exact_values(const Env& env, const TabularPolicy& policy, double gamma);
/// A(s,a) = r(s,a) + gamma * V(s') - V(s).
std::vector<std::array<double, 2>> exact_advantages(const Env& env, const TabularPolicy& policy,
                                                    double gamma);
/// Expected return over the next `horizon` steps from each state.
std::vector<double> finite_horizon_values(const Env& env, const TabularPolicy& policy,
                                          double gamma, int horizon);
/// Max Bellman residual of `values` for `policy`.
double bellman_residual(const Env& env, const TabularPolicy& policy, double gamma,
                        const std::vector<double>& values);

/// Gridworld with diamonds to collect. The background color is drawn per
/// level and has no effect on dynamics or reward.
class ConfoundedGrid final : public Env {
 public:
  static constexpr std::size_t kPaletteSize = 24;
  static constexpr std::array<double, 3> kAgentColor{1.0, 1.0, 1.0};
  static constexpr std::array<double, 3> kDiamondColor{1.0, 1.0, 0.0};
  // 0 up, 1 down, 2 left, 3 right
  static constexpr std::size_t kNumActions = 4;

  struct Layout {
    int agent_x = 0;
    int agent_y = 0;
    std::vector<std::pair<int, int>> diamonds;  // (x, y)
    std::size_t background = 0;
    bool operator==(const Layout&) const = default;
  };

  ConfoundedGrid(int size = 9, int diamonds = 3, int max_steps = 50);

  const EnvSpec& spec() const override { return spec_; }
  Obs reset(LevelSeed level) override;
  StepResult step(const Action& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<ConfoundedGrid>(*this); }

  Layout layout_for_level(LevelSeed level) const;
  /// Starts an episode on an explicit layout (paired-confounder tests).
  Obs reset_with_layout(const Layout& layout);
  const Layout& current() const { return layout_; }
  Obs render() const;

  static const std::array<std::array<double, 3>, kPaletteSize>& palette();

 private:
  int size_;
  int num_diamonds_;
  Layout layout_;
  EnvSpec spec_;
};

/// 1-D point mass driven toward the origin. Observation is
/// [position, velocity, d level-seeded distractor constants].
class DistractorControl final : public Env {
 public:
  explicit DistractorControl(int distractor_dims = 4, double distractor_scale = 1.0,
                             int max_steps = 200);

  const EnvSpec& spec() const override { return spec_; }
  Obs reset(LevelSeed level) override;
  StepResult step(const Action& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<DistractorControl>(*this); }

  double position() const { return pos_; }
  double velocity() const { return vel_; }
  static constexpr double kTarget = 0.0;

 private:
  Obs observe() const;

  int dims_;
  double scale_;
  double pos_ = 0.0;
  double vel_ = 0.0;
  std::vector<double> distractors_;
  EnvSpec spec_;
};

}  // namespace bae
