#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "bae/advantage.hpp"
#include "bae/errors.hpp"
#include "bae/policy.hpp"
#include "bae/rollout.hpp"

using namespace bae;

namespace {

NetSpec chain_spec(const Env& env) {
  NetSpec s;
  s.obs_dim = env.spec().obs_size();
  s.action = env.spec().action;
  s.hidden = {16};
  return s;
}

// Pushes the right-action logit far above the left one.
ActorCritic always_right(const Env& env) {
  Rng init(1);
  ActorCritic net = ActorCritic::init(chain_spec(env), init);
  Matrix& b = net.params().value("pi.head.b");
  b(0, 0) = -60.0;
  b(0, 1) = 60.0;
  return net;
}

bool same_buffers(const RolloutBuffer& a, const RolloutBuffer& b) {
  if (a.size() != b.size() || a.segment_ends != b.segment_ends || a.bootstraps.size() != b.bootstraps.size())
    return false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const auto &x = a.steps[t], &y = b.steps[t];
    if (x.obs.data != y.obs.data || !(x.action == y.action) || x.reward != y.reward ||
        x.terminated != y.terminated || x.truncated != y.truncated || x.logprob != y.logprob ||
        x.value_pred != y.value_pred)
      return false;
  }
  for (std::size_t i = 0; i < a.bootstraps.size(); ++i)
    if (a.bootstraps[i].index != b.bootstraps[i].index || a.bootstraps[i].value != b.bootstraps[i].value)
      return false;
  return true;
}

}  // namespace

TEST(CollectTest, SingleStep) {
  ChainMDP env(5);
  Rng init(2), er(3), pr(4);
  const ActorCritic net = ActorCritic::init(chain_spec(env), init);
  const RolloutBuffer buf = collect(net, env, LevelSampler(0, 1), 1, er, pr);
  ASSERT_EQ(buf.size(), 1u);
  EXPECT_TRUE(std::isfinite(buf.steps[0].logprob));
  EXPECT_LE(buf.steps[0].logprob, 0.0);
  EXPECT_TRUE(std::isfinite(buf.steps[0].value_pred));
  EXPECT_TRUE(buf.finalized);
  EXPECT_EQ(buf.segment_ends, (std::vector<std::size_t>{0}));
  ASSERT_EQ(buf.bootstraps.size(), 1u);
}

TEST(CollectTest, AlwaysRightRewardsCountGoalEntries) {
  ChainMDP env(5);
  const ActorCritic net = always_right(env);
  Rng er(1), pr(2);
  const RolloutBuffer buf = collect(net, env, LevelSampler(0, 1), 10, er, pr);
  double total = 0.0;
  std::size_t goals = 0;
  for (const auto& s : buf.steps) {
    total += s.reward;
    goals += s.terminated ? 1 : 0;
    EXPECT_EQ(s.action.index, ChainMDP::kRight);
  }
  EXPECT_EQ(goals, 2u);
  EXPECT_EQ(total, static_cast<double>(goals));
  EXPECT_EQ(buf.completed_episode_returns, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(buf.segment_ends, (std::vector<std::size_t>{4, 9}));
  EXPECT_TRUE(buf.bootstraps.empty());
}

TEST(CollectTest, SameSeedsGiveIdenticalBuffers) {
  ConfoundedGrid env;
  Rng init(5);
  NetSpec spec = chain_spec(env);
  const ActorCritic net = ActorCritic::init(spec, init);
  Rng e1(7), p1(8), e2(7), p2(8);
  const RolloutBuffer a = collect(net, env, LevelSampler(0, 20), 200, e1, p1);
  const RolloutBuffer b = collect(net, env, LevelSampler(0, 20), 200, e2, p2);
  EXPECT_TRUE(same_buffers(a, b));
}

TEST(CollectTest, SegmentsEndAtDoneOrBufferEnd) {
  ChainMDP env(3, 4);
  Rng init(9), er(10), pr(11);
  const ActorCritic net = ActorCritic::init(chain_spec(env), init);
  RolloutCollector collector(env, LevelSampler(0, 1));
  for (int round = 0; round < 5; ++round) {
    const RolloutBuffer buf = collector.collect(net, 37, er, pr);
    ASSERT_EQ(buf.size(), 37u);
    EXPECT_TRUE(std::is_sorted(buf.segment_ends.begin(), buf.segment_ends.end()));
    EXPECT_EQ(std::adjacent_find(buf.segment_ends.begin(), buf.segment_ends.end()), buf.segment_ends.end());
    EXPECT_EQ(buf.segment_ends.back(), 36u);
    std::set<std::size_t> ends(buf.segment_ends.begin(), buf.segment_ends.end());
    for (std::size_t t = 0; t < buf.size(); ++t)
      EXPECT_EQ(buf.steps[t].done() || t == 36, ends.count(t) == 1) << t;
    // Every truncation and a non-terminal buffer end carries a bootstrap.
    std::size_t expected = 0;
    for (std::size_t t = 0; t < buf.size(); ++t)
      if (buf.steps[t].truncated || (t == 36 && !buf.steps[t].done())) ++expected;
    EXPECT_EQ(buf.bootstraps.size(), expected);
    for (const auto& b : buf.bootstraps) EXPECT_EQ(b.value, net.value(b.obs));
  }
  EXPECT_EQ(collector.total_steps(), 5u * 37u);
}

TEST(CollectTest, ResumesOngoingEpisodeAcrossCalls) {
  ChainMDP env(5, 100);
  Rng init(12);
  ActorCritic net = ActorCritic::init(chain_spec(env), init);
  Matrix& b = net.params().value("pi.head.b");
  b(0, 0) = 60.0;  // always left: the episode never ends inside 100 steps
  b(0, 1) = -60.0;
  RolloutCollector collector(env, LevelSampler(0, 1));
  Rng er(1), pr(2);
  collector.collect(net, 10, er, pr);
  const RolloutBuffer second = collector.collect(net, 10, er, pr);
  EXPECT_EQ(env.elapsed_steps(), 20);
  EXPECT_FALSE(second.steps.back().done());
}

TEST(CollectTest, LevelsDrawnFromTrainRange) {
  ConfoundedGrid env(9, 3, 5);
  Rng init(13);
  const ActorCritic net = ActorCritic::init(chain_spec(env), init);
  Rng er(3), pr(4);
  const LevelSampler levels(100, 3);
  const RolloutBuffer buf = collect(net, env, levels, 100, er, pr);
  std::set<std::size_t> backgrounds;
  ConfoundedGrid probe;
  for (std::int64_t l = 100; l < 103; ++l) backgrounds.insert(probe.layout_for_level(LevelSeed{l}).background);
  for (const auto& s : buf.steps) {
    // Background color of the (0,0) or (8,8) corner identifies the level's palette entry.
    bool found = false;
    for (std::size_t bg : backgrounds) {
      const auto& col = ConfoundedGrid::palette()[bg];
      for (auto [y, x] : {std::pair{0, 0}, std::pair{8, 8}, std::pair{0, 8}})
        found = found || (s.obs.at(0, y, x) == col[0] && s.obs.at(1, y, x) == col[1] && s.obs.at(2, y, x) == col[2]);
    }
    EXPECT_TRUE(found);
  }
}

TEST(CollectTest, StoredLogprobReproducedByEvaluate) {
  ConfoundedGrid env;
  Rng init(14), er(1), pr(2);
  const ActorCritic net = ActorCritic::init(chain_spec(env), init);
  const RolloutBuffer buf = collect(net, env, LevelSampler(0, 20), 64, er, pr);
  std::vector<Action> actions;
  std::vector<Obs> obs;
  for (const auto& s : buf.steps) {
    actions.push_back(s.action);
    obs.push_back(s.obs);
  }
  ad::Graph g;
  const BatchEval ev = net.evaluate(g, stack_obs(obs), actions);
  for (std::size_t t = 0; t < buf.size(); ++t) {
    EXPECT_NEAR(ev.logprobs.value()[t], buf.steps[t].logprob, 1e-12);
    EXPECT_NEAR(ev.values.value()[t], buf.steps[t].value_pred, 1e-12);
  }
}

TEST(CollectTest, ZeroStepsIsContractError) {
  ChainMDP env(5);
  Rng init(1), er(1), pr(1);
  const ActorCritic net = ActorCritic::init(chain_spec(env), init);
  EXPECT_THROW(collect(net, env, LevelSampler(0, 1), 0, er, pr), ContractError);
}

TEST(LevelSamplerTest, RangeValidation) {
  EXPECT_THROW(LevelSampler(0, 0), ConfigError);
  EXPECT_THROW(LevelSampler(-1, 5), ConfigError);
  LevelSampler s(10, 5);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) EXPECT_TRUE(s.contains(s.sample(rng).id));
}

TEST(MinibatchTest, TwoDisjointBatchesCoverAll) {
  Rng rng(1);
  const auto mb = minibatches(8, 4, 1, rng);
  ASSERT_EQ(mb.size(), 2u);
  std::set<std::size_t> all(mb[0].begin(), mb[0].end());
  all.insert(mb[1].begin(), mb[1].end());
  EXPECT_EQ(all.size(), 8u);
}

TEST(MinibatchTest, EachEpochIsAPermutation) {
  Rng rng(2);
  const auto mb = minibatches(12, 3, 3, rng);
  ASSERT_EQ(mb.size(), 12u);
  for (std::size_t e = 0; e < 3; ++e) {
    std::multiset<std::size_t> seen;
    for (std::size_t b = 0; b < 4; ++b) seen.insert(mb[e * 4 + b].begin(), mb[e * 4 + b].end());
    EXPECT_EQ(seen.size(), 12u);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(seen.count(i), 1u);
  }
}

TEST(MinibatchTest, IndivisibleBatchIsConfigError) {
  Rng rng(3);
  EXPECT_THROW(minibatches(10, 4, 1, rng), ConfigError);
  EXPECT_THROW(minibatches(10, 0, 1, rng), ConfigError);
}

TEST(EpisodeIsolationTest, RewardsAfterTerminalDoNotLeakBackwards) {
  ChainMDP env(3, 50);
  Rng init(4), er(5), pr(6);
  const ActorCritic net = ActorCritic::init(chain_spec(env), init);
  RolloutBuffer buf = collect(net, env, LevelSampler(0, 1), 64, er, pr);
  std::size_t term = buf.size();
  for (std::size_t t = 0; t + 1 < buf.size(); ++t)
    if (buf.steps[t].terminated) {
      term = t;
      break;
    }
  ASSERT_LT(term, buf.size());
  std::vector<double> cur(buf.size()), boot;
  for (std::size_t t = 0; t < buf.size(); ++t) cur[t] = buf.steps[t].value_pred;
  for (const auto& b : buf.bootstraps) boot.push_back(b.value);
  AdvantageConfig cfg;
  ValueTable table(1, buf.size());
  table.set_row(0, cur, buffer_next_values(buf, cur, boot));
  const auto base = estimate_advantages(table, buf.trajectory(), cfg);
  Trajectory perturbed = buf.trajectory();
  for (std::size_t t = term + 1; t < perturbed.size(); ++t) perturbed.rewards[t] += 100.0;
  const auto moved = estimate_advantages(table, perturbed, cfg);
  for (std::size_t t = 0; t <= term; ++t) EXPECT_EQ(base.advantages[t], moved.advantages[t]);
  EXPECT_NE(base.advantages[term + 1], moved.advantages[term + 1]);
}
