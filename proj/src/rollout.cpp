#include "bae/rollout.hpp"

#include <numeric>

#include "bae/errors.hpp"
#include "bae/policy.hpp"

namespace bae {

Trajectory RolloutBuffer::trajectory() const {
  Trajectory t;
  t.rewards.reserve(steps.size());
  t.terminated.reserve(steps.size());
  t.truncated.reserve(steps.size());
  for (const auto& s : steps) {
    t.rewards.push_back(s.reward);
    t.terminated.push_back(s.terminated);
    t.truncated.push_back(s.truncated);
  }
  return t;
}

LevelSampler::LevelSampler(std::int64_t first, std::int64_t count) : first_(first), count_(count) {
  if (first < 0 || count < 1) throw ConfigError("level range must have first >= 0 and count >= 1");
}

LevelSeed LevelSampler::sample(Rng& rng) const {
  return LevelSeed{first_ + static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(count_)))};
}

RolloutCollector::RolloutCollector(Env& env, LevelSampler levels)
    : env_(env), levels_(levels) {}

RolloutBuffer RolloutCollector::collect(const ActorCritic& policy, std::size_t n_steps,
                                        Rng& env_rng, Rng& policy_rng) {
  if (n_steps < 1) throw ContractError("collect: n_steps must be >= 1");
  if (!started_) {
    current_ = env_.reset(levels_.sample(env_rng));
    episode_return_ = 0.0;
    started_ = true;
  }
  RolloutBuffer buf;
  buf.capacity = n_steps;
  buf.steps.reserve(n_steps);
  for (std::size_t t = 0; t < n_steps; ++t) {
    PolicyOutput out = policy.act(current_, policy_rng);
    StepResult res = env_.step(out.action);
    episode_return_ += res.reward;
    buf.steps.push_back(Transition{std::move(current_), std::move(out.action), res.reward,
                                   res.terminated, res.truncated, out.logprob, out.value});
    ++total_steps_;
    if (res.terminated || res.truncated) {
      buf.segment_ends.push_back(t);
      buf.completed_episode_returns.push_back(episode_return_);
      episode_return_ = 0.0;
      if (res.truncated) {
        const double v = policy.value(res.obs);
        buf.bootstraps.push_back(BootstrapObs{t, std::move(res.obs), v});
      }
      current_ = env_.reset(levels_.sample(env_rng));
    } else {
      current_ = std::move(res.obs);
    }
  }
  if (!buf.steps.back().done()) {
    buf.segment_ends.push_back(n_steps - 1);
    buf.bootstraps.push_back(BootstrapObs{n_steps - 1, current_, policy.value(current_)});
  }
  buf.finalized = true;
  return buf;
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::size_t epochs, Rng& rng) {
  if (batch_size == 0 || n % batch_size != 0) {
    throw ConfigError("minibatch size " + std::to_string(batch_size) + " does not divide " +
                      std::to_string(n) + " steps");
  }
  std::vector<std::vector<std::size_t>> out;
  out.reserve(epochs * (n / batch_size));
  std::vector<std::size_t> perm(n);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    for (std::size_t b = 0; b < n; b += batch_size)
      out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b),
                       perm.begin() + static_cast<std::ptrdiff_t>(b + batch_size));
  }
  return out;
}

}  // namespace bae

namespace bae {

RolloutBuffer collect(const ActorCritic& policy, Env& env, LevelSampler levels,
                      std::size_t n_steps, Rng& env_rng, Rng& policy_rng) {
  RolloutCollector c(env, levels);
  return c.collect(policy, n_steps, env_rng, policy_rng);
}

}  // namespace bae
