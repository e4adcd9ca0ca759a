#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bae/envs.hpp"
#include "bae/rng.hpp"

namespace bae {

class ActorCritic;

struct Transition {
  Obs obs;
  Action action;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  double logprob = 0.0;
  double value_pred = 0.0;

  bool done() const { return terminated || truncated; }
};

/// Observation that closes a segment without termination: the final state of a
/// time-limited episode, or the state following the last stored transition.
struct BootstrapObs {
  std::size_t index = 0;  // transition whose successor this is
  Obs obs;
  double value = 0.0;
};

/// Per-step reward/termination stream consumed by advantage estimators.
struct Trajectory {
  std::vector<double> rewards;
  std::vector<bool> terminated;
  std::vector<bool> truncated;

  std::size_t size() const { return rewards.size(); }
  bool done(std::size_t t) const { return terminated[t] || truncated[t]; }
};

struct RolloutBuffer {
  std::vector<Transition> steps;
  /// Index of the last transition in each segment, strictly increasing.
  std::vector<std::size_t> segment_ends;
  std::vector<BootstrapObs> bootstraps;
  std::size_t capacity = 0;
  bool finalized = false;

  std::size_t size() const { return steps.size(); }
  Trajectory trajectory() const;
  /// Undiscounted returns of episodes that finished inside this buffer.
  std::vector<double> completed_episode_returns;
};

/// Samples train levels uniformly on each reset.
class LevelSampler {
 public:
  LevelSampler(std::int64_t first, std::int64_t count);
  LevelSeed sample(Rng& rng) const;
  std::int64_t first() const { return first_; }
  std::int64_t count() const { return count_; }
  bool contains(std::int64_t level) const { return level >= first_ && level < first_ + count_; }

 private:
  std::int64_t first_;
  std::int64_t count_;
};

/// Steps `env` with `policy` for n_steps, resuming an ongoing episode between
/// calls. Holds the running episode state for a single environment.
class RolloutCollector {
 public:
  RolloutCollector(Env& env, LevelSampler levels);

  RolloutBuffer collect(const ActorCritic& policy, std::size_t n_steps, Rng& env_rng,
                        Rng& policy_rng);
  std::uint64_t total_steps() const { return total_steps_; }

 private:
  Env& env_;
  LevelSampler levels_;
  Obs current_;
  bool started_ = false;
  double episode_return_ = 0.0;
  std::uint64_t total_steps_ = 0;
};

/// Per-epoch random permutations of [0, n) split into equal batches.
/// Throws ConfigError when batch_size does not divide n.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::size_t epochs, Rng& rng);

}  // namespace bae

namespace bae {

/// One-shot collection starting from a fresh episode.
RolloutBuffer collect(const ActorCritic& policy, Env& env, LevelSampler levels,
                      std::size_t n_steps, Rng& env_rng, Rng& policy_rng);

}  // namespace bae
