#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bae/augment.hpp"
#include "bae/errors.hpp"
#include "bae/gradcheck.hpp"
#include "bae/ppo.hpp"
#include "bae/synthetic.hpp"

using namespace bae;

namespace {

struct ChainRun {
  ActorCritic net;
  RolloutBuffer buf;
};

ChainRun chain_setup(std::uint64_t seed, std::size_t n = 64) {
  ChainMDP env(5);
  NetSpec spec;
  spec.obs_dim = env.spec().obs_size();
  spec.action = env.spec().action;
  spec.hidden = {16, 16};
  Rng init(seed), er(seed + 1), pr(seed + 2);
  ActorCritic net = ActorCritic::init(spec, init);
  RolloutBuffer buf = collect(net, env, LevelSampler(0, 1), n, er, pr);
  return {std::move(net), std::move(buf)};
}

AdvantageEstimate estimate(const ActorCritic& net, const RolloutBuffer& buf,
                           std::span<const RolloutBuffer> aug = {}, bool use_bae = false) {
  AdvantageConfig cfg;
  if (use_bae) {
    cfg.method = AdvMethod::kBae;
    cfg.m = aug.size();
  }
  return normalize_advantages(estimate_advantages(build_value_table(net, buf, aug), buf.trajectory(), cfg));
}

}  // namespace

TEST(PolicyLossTest, UnitRatiosGiveNegativeMeanAdvantage) {
  const std::vector<double> r{1, 1, 1}, a{0.5, -2.0, 3.0};
  EXPECT_NEAR(policy_loss(r, a, 0.2), -0.5, 1e-15);
}

TEST(PolicyLossTest, ClipArithmetic) {
  EXPECT_NEAR(policy_loss(std::vector<double>{1.5}, std::vector<double>{1.0}, 0.2), -1.2, 1e-15);
  EXPECT_NEAR(policy_loss(std::vector<double>{0.5}, std::vector<double>{-1.0}, 0.2), 0.8, 1e-15);
}

TEST(PolicyLossTest, GraphAndPlainAgree) {
  Rng rng(1);
  std::vector<double> r(20), a(20);
  for (std::size_t i = 0; i < 20; ++i) {
    r[i] = std::exp(0.5 * rng.normal());
    a[i] = rng.normal();
  }
  ad::Graph g;
  const double v = policy_loss(g.constant(Matrix::column(r)), g.constant(Matrix::column(a)), 0.2).value()[0];
  EXPECT_NEAR(v, policy_loss(r, a, 0.2), 1e-15);
}

TEST(ValueLossTest, Examples) {
  EXPECT_EQ(value_loss(std::vector<double>{1, 2}, std::vector<double>{1, 2}, ValueLossKind::kMse), 0.0);
  EXPECT_EQ(value_loss(std::vector<double>{1}, std::vector<double>{0}, ValueLossKind::kMse), 0.5);
  EXPECT_EQ(value_loss(std::vector<double>{1, -1}, std::vector<double>{0, 0}, ValueLossKind::kL1), 1.0);
  ad::Graph g;
  EXPECT_EQ(value_loss(g.constant(Matrix{{1}, {-1}}), g.constant(Matrix(2, 1, 0.0)), ValueLossKind::kL1).value()[0], 1.0);
}

TEST(DracTest, IdentityAugmentationGivesZero) {
  Rng rng(2);
  for (bool discrete : {true, false}) {
    SyntheticLossProblem p = random_loss_problem(rng, 8, discrete);
    ad::Graph g;
    auto [gp, gv] = drac_regularizers(g, p.net, p.batch.obs, p.batch.obs);
    EXPECT_NEAR(gp.value()[0], 0.0, 1e-15);
    EXPECT_EQ(gv.value()[0], 0.0);
  }
}

TEST(DracTest, ConstantValueHeadGivesZeroValueTerm) {
  Rng rng(3);
  SyntheticLossProblem p = random_loss_problem(rng, 8, true);
  p.net.params().value("v.head.w").fill(0.0);
  Matrix aug = p.batch.obs;
  for (double& x : aug.data()) x *= 1.3;
  ad::Graph g;
  auto [gp, gv] = drac_regularizers(g, p.net, p.batch.obs, aug);
  EXPECT_EQ(gv.value()[0], 0.0);
  EXPECT_GT(gp.value()[0], 0.0);
}

TEST(DracTest, KlAgreesWithDirectEvaluation) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const bool discrete = trial % 2 == 0;
    SyntheticLossProblem p = random_loss_problem(rng, 6, discrete, 0.8);
    Matrix aug = p.batch.obs;
    for (double& x : aug.data()) x += 0.5 * rng.normal();
    ad::Graph g;
    auto [gp, gv] = drac_regularizers(g, p.net, p.batch.obs, aug);
    ad::Graph h;
    auto [d1, s1] = p.net.policy_head(h, p.batch.obs, false);
    auto [d2, s2] = p.net.policy_head(h, aug, false);
    double kl = 0.0;
    for (std::size_t r = 0; r < 6; ++r) {
      if (discrete) {
        std::vector<double> lp(3), lq(3);
        double zp = 0, zq = 0;
        for (std::size_t c = 0; c < 3; ++c) {
          zp += std::exp(d1.value()(r, c));
          zq += std::exp(d2.value()(r, c));
        }
        for (std::size_t c = 0; c < 3; ++c) {
          const double pl = d1.value()(r, c) - std::log(zp), ql = d2.value()(r, c) - std::log(zq);
          kl += std::exp(pl) * (pl - ql);
        }
      } else {
        for (std::size_t c = 0; c < 2; ++c) {
          const double sd1 = std::exp(s1.value()[c]), sd2 = std::exp(s2.value()[c]);
          const double dm = d1.value()(r, c) - d2.value()(r, c);
          kl += std::log(sd2 / sd1) + (sd1 * sd1 + dm * dm) / (2 * sd2 * sd2) - 0.5;
        }
      }
    }
    EXPECT_NEAR(gp.value()[0], kl / 6.0, 1e-12);
    EXPECT_GT(gp.value()[0], 0.0);
    EXPECT_GT(gv.value()[0], 0.0);
  }
}

TEST(DracTest, GradientFlowsOnlyThroughAugmentedBranch) {
  Rng rng(5);
  SyntheticLossProblem p = random_loss_problem(rng, 6, true);
  Matrix aug = p.batch.obs;
  for (double& x : aug.data()) x *= 0.7;
  ad::Graph ref;
  const Matrix ref_v = p.net.value_head(ref, p.batch.obs, false).value();
  // Reference values frozen: finite differences see only the augmented branch.
  LossBuilder frozen = [&](ad::Graph& g, ParamStore&) {
    return ad::mean(ad::square(ad::sub(g.constant(ref_v), p.net.value_head(g, aug, true))));
  };
  finite_diff_check(frozen, p.net.params());
  std::vector<Matrix> expect;
  for (std::size_t i = 0; i < p.net.params().size(); ++i) expect.push_back(p.net.params().grad(i));
  p.net.params().zero_grads();
  ad::Graph g;
  auto [gp, gv] = drac_regularizers(g, p.net, p.batch.obs, aug);
  g.backward(gv);
  for (std::size_t i = 0; i < expect.size(); ++i)
    for (std::size_t j = 0; j < expect[i].size(); ++j)
      EXPECT_NEAR(p.net.params().grad(i)[j], expect[i][j], 1e-12);
}

TEST(PpoLossTest, FullLossGradientCheck) {
  Rng rng(6);
  for (int trial = 0; trial < 6; ++trial) {
    SyntheticLossProblem p = random_loss_problem(rng, 8, trial % 2 == 0);
    LossBuilder f = [&](ad::Graph& g, ParamStore&) { return ppo_loss(g, p.net, p.batch, p.cfg).total; };
    EXPECT_LT(finite_diff_check(f, p.net.params()).max_rel_error, 1e-5) << trial;
  }
}

TEST(PpoLossTest, ClippedSampleHasZeroPolicyGradient) {
  Rng rng(7);
  SyntheticLossProblem p = random_loss_problem(rng, 1, true);
  ad::Graph g0;
  const double lp = std::as_const(p.net).evaluate(g0, p.batch.obs, p.batch.actions).logprobs.value()[0];
  p.cfg.vf_coef = 0.0;
  p.cfg.ent_coef = 0.0;
  for (auto [log_ratio, adv] : {std::pair{std::log(1.5), 1.0}, std::pair{std::log(0.5), -1.0}}) {
    p.batch.old_logprobs = {lp - log_ratio};
    p.batch.advantages = {adv};
    p.net.params().zero_grads();
    ad::Graph g;
    g.backward(ppo_loss(g, p.net, p.batch, p.cfg).total);
    EXPECT_EQ(p.net.params().grad_norm(), 0.0);
  }
  // Inside the band the gradient is nonzero.
  p.batch.old_logprobs = {lp - 0.05};
  p.net.params().zero_grads();
  ad::Graph g;
  g.backward(ppo_loss(g, p.net, p.batch, p.cfg).total);
  EXPECT_GT(p.net.params().grad_norm(), 0.0);
}

TEST(PpoLossTest, HugeClipEqualsUnclippedGradient) {
  Rng rng(8);
  SyntheticLossProblem p = random_loss_problem(rng, 8, true);
  p.cfg.clip = 1e12;
  p.cfg.vf_coef = 0.0;
  p.cfg.ent_coef = 0.0;
  ad::Graph g;
  g.backward(ppo_loss(g, p.net, p.batch, p.cfg).total);
  std::vector<Matrix> clipped;
  for (std::size_t i = 0; i < p.net.params().size(); ++i) clipped.push_back(p.net.params().grad(i));
  LossBuilder unclipped = [&](ad::Graph& h, ParamStore&) {
    const BatchEval ev = p.net.evaluate(h, p.batch.obs, p.batch.actions);
    ad::Var ratio = ad::exp(ad::sub(ev.logprobs, h.constant(Matrix::column(p.batch.old_logprobs))));
    return ad::neg(ad::mean(ad::mul(ratio, h.constant(Matrix::column(p.batch.advantages)))));
  };
  EXPECT_LT(finite_diff_check(unclipped, p.net.params()).max_rel_error, 1e-5);
  for (std::size_t i = 0; i < clipped.size(); ++i)
    for (std::size_t j = 0; j < clipped[i].size(); ++j)
      EXPECT_NEAR(clipped[i][j], p.net.params().grad(i)[j], 1e-13);
}

TEST(AdamTest, FirstStepMatchesHandComputation) {
  ParamStore s;
  s.add("w", Matrix{{1.0, -2.0, 0.5}});
  s.grad("w") = Matrix{{0.2, -0.4, 0.0}};
  Adam opt(s);
  opt.step(s, 0.1);
  EXPECT_NEAR(s.value("w")[0], 1.0 - 0.1 * 0.2 / (0.2 + 1e-8), 1e-15);
  EXPECT_NEAR(s.value("w")[1], -2.0 + 0.1 * 0.4 / (0.4 + 1e-8), 1e-15);
  EXPECT_EQ(s.value("w")[2], 0.5);
  EXPECT_EQ(opt.steps(), 1u);
  EXPECT_EQ(s.step_count(), 1u);
}

TEST(AdamTest, SecondStepUsesBiasCorrection) {
  ParamStore s;
  s.add("w", Matrix::scalar(0.0));
  Adam opt(s);
  s.grad("w")[0] = 1.0;
  opt.step(s, 1.0);
  s.grad("w")[0] = 3.0;
  opt.step(s, 1.0);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0, v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(s.value("w")[0], -1.0 / (1.0 + 1e-8) - mh / (std::sqrt(vh) + 1e-8), 1e-12);
}

TEST(UpdateTest, StationaryPointLeavesParamsUnchanged) {
  ChainRun st = chain_setup(1);
  AdvantageEstimate est;
  est.advantages.assign(st.buf.size(), 0.0);
  est.value_targets.assign(st.buf.size(), 0.0);
  st.net.params().value("v.head.w").fill(0.0);
  st.net.params().value("v.head.b").fill(0.0);
  PPOConfig cfg;
  cfg.ent_coef = 0.0;
  cfg.batch_size = 16;
  const ParamStore before = st.net.params();
  Adam opt(st.net.params());
  Rng rng(1);
  update(st.net, opt, st.buf, {}, est, cfg, rng);
  EXPECT_TRUE(st.net.params().values_equal(before));
}

TEST(UpdateTest, FirstStepReducesSurrogate) {
  ChainRun st = chain_setup(2, 64);
  const AdvantageEstimate est = estimate(st.net, st.buf);
  PPOConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 1;
  cfg.lr = 1e-4;
  cfg.vf_coef = 0.0;
  cfg.ent_coef = 0.0;
  LossBatch b;
  std::vector<Obs> obs;
  for (const auto& s : st.buf.steps) {
    obs.push_back(s.obs);
    b.actions.push_back(s.action);
    b.old_logprobs.push_back(s.logprob);
  }
  b.obs = stack_obs(obs);
  b.advantages = est.advantages;
  b.value_targets = est.value_targets;
  auto surrogate = [&] {
    ad::Graph g;
    return ppo_loss(g, st.net, b, cfg).policy.value()[0];
  };
  const double before = surrogate();
  Adam opt(st.net.params());
  Rng rng(3);
  update(st.net, opt, st.buf, {}, est, cfg, rng);
  EXPECT_LT(surrogate(), before);
}

TEST(UpdateTest, FirstMinibatchKlIsZero) {
  ChainRun st = chain_setup(3);
  const AdvantageEstimate est = estimate(st.net, st.buf);
  PPOConfig cfg;
  cfg.batch_size = 16;
  Adam opt(st.net.params());
  Rng rng(4);
  const UpdateStats stats = update(st.net, opt, st.buf, {}, est, cfg, rng);
  ASSERT_EQ(stats.minibatches.size(), 16u);
  EXPECT_NEAR(stats.minibatches[0].approx_kl, 0.0, 1e-20);
  EXPECT_EQ(stats.minibatches[0].clip_fraction, 0.0);
  for (const auto& mb : stats.minibatches) {
    EXPECT_GE(mb.clip_fraction, 0.0);
    EXPECT_LE(mb.clip_fraction, 1.0);
    EXPECT_GE(mb.entropy, 0.0);
  }
}

TEST(UpdateTest, BaeWithIdentityMatchesGaeBitForBit) {
  ChainRun a = chain_setup(4), b = chain_setup(4);
  Rng aug_rng(1);
  const std::vector<RolloutBuffer> aug{apply_to_buffer(AugmentationSpec::identity(), b.buf, aug_rng)};
  const AdvantageEstimate eg = estimate(a.net, a.buf);
  const AdvantageEstimate eb = estimate(b.net, b.buf, aug, true);
  EXPECT_EQ(eg.advantages, eb.advantages);
  PPOConfig cg, cb;
  cg.batch_size = cb.batch_size = 16;
  cb.method = PpoMethod::kBae;
  Adam oa(a.net.params()), ob(b.net.params());
  Rng ra(5), rb(5);
  const UpdateStats sa = update(a.net, oa, a.buf, {}, eg, cg, ra);
  const UpdateStats sb = update(b.net, ob, b.buf, aug, eb, cb, rb);
  EXPECT_TRUE(sa == sb);
  EXPECT_TRUE(a.net.params().values_equal(b.net.params()));
}

TEST(UpdateTest, RadWithIdentityMatchesGae) {
  ChainRun a = chain_setup(5), b = chain_setup(5);
  Rng aug_rng(1);
  const std::vector<RolloutBuffer> aug{apply_to_buffer(AugmentationSpec::identity(), b.buf, aug_rng)};
  const AdvantageEstimate est = estimate(a.net, a.buf);
  PPOConfig cg, cr;
  cg.batch_size = cr.batch_size = 16;
  cr.method = PpoMethod::kRad;
  Adam oa(a.net.params()), ob(b.net.params());
  Rng ra(6), rb(6);
  EXPECT_TRUE(update(a.net, oa, a.buf, {}, est, cg, ra) == update(b.net, ob, b.buf, aug, est, cr, rb));
}

TEST(UpdateTest, RadTrainsOnAugmentedObservations) {
  ChainRun a = chain_setup(6), b = chain_setup(6);
  Rng aug_rng(2);
  const std::vector<RolloutBuffer> aug{apply_to_buffer(AugmentationSpec::amplitude(0.6, 1.2), b.buf, aug_rng)};
  const AdvantageEstimate est = estimate(a.net, a.buf);
  PPOConfig cg, cr;
  cg.batch_size = cr.batch_size = 16;
  cr.method = PpoMethod::kRad;
  Adam oa(a.net.params()), ob(b.net.params());
  Rng ra(7), rb(7);
  const UpdateStats sg = update(a.net, oa, a.buf, {}, est, cg, ra);
  const UpdateStats sr = update(b.net, ob, b.buf, aug, est, cr, rb);
  EXPECT_NE(sg.policy_loss, sr.policy_loss);
}

TEST(UpdateTest, DracAddsRegularizers) {
  ChainRun st = chain_setup(7);
  Rng aug_rng(3);
  const std::vector<RolloutBuffer> aug{apply_to_buffer(AugmentationSpec::amplitude(0.6, 1.2), st.buf, aug_rng)};
  const AdvantageEstimate est = estimate(st.net, st.buf);
  PPOConfig cfg;
  cfg.batch_size = 16;
  cfg.method = PpoMethod::kDrac;
  Adam opt(st.net.params());
  Rng rng(8);
  const UpdateStats s = update(st.net, opt, st.buf, aug, est, cfg, rng);
  EXPECT_GT(s.minibatches[0].drac_value, 0.0);
  EXPECT_GE(s.minibatches[0].drac_policy, 0.0);
  const std::vector<RolloutBuffer> none;
  EXPECT_THROW(update(st.net, opt, st.buf, none, est, cfg, rng), ContractError);
}

TEST(UpdateTest, GradientNormIsClipped) {
  ChainRun st = chain_setup(8);
  AdvantageEstimate est = estimate(st.net, st.buf);
  for (double& a : est.advantages) a *= 100.0;
  PPOConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 1;
  cfg.max_grad_norm = 0.01;
  Adam opt(st.net.params());
  Rng rng(9);
  const UpdateStats s = update(st.net, opt, st.buf, {}, est, cfg, rng);
  EXPECT_GT(s.grad_norm, 0.01);
  EXPECT_LE(st.net.params().grad_norm(), 0.01 * (1 + 1e-9));
}

TEST(UpdateTest, NanLossIsNumericalError) {
  ChainRun st = chain_setup(9);
  AdvantageEstimate est = estimate(st.net, st.buf);
  est.advantages.assign(est.advantages.size(), std::numeric_limits<double>::quiet_NaN());
  PPOConfig cfg;
  cfg.batch_size = 16;
  Adam opt(st.net.params());
  Rng rng(1);
  EXPECT_THROW(update(st.net, opt, st.buf, {}, est, cfg, rng), NumericalError);
}

TEST(UpdateTest, AdvantageScaleDoesNotChangeNormalizedUpdate) {
  ChainRun a = chain_setup(10), b = chain_setup(10);
  AdvantageConfig acfg;
  auto raw = estimate_advantages(build_value_table(a.net, a.buf, {}), a.buf.trajectory(), acfg);
  auto scaled = raw;
  for (double& x : scaled.advantages) x *= 4.0;
  const auto na = normalize_advantages(raw), nb = normalize_advantages(scaled);
  for (std::size_t i = 0; i < na.advantages.size(); ++i) EXPECT_NEAR(na.advantages[i], nb.advantages[i], 1e-12);
}

TEST(PpoConfigTest, Validation) {
  PPOConfig c;
  c.validate();
  c.clip = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PPOConfig{};
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PPOConfig{};
  c.ent_coef = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_ppo_method("a2c"), ConfigError);
  EXPECT_EQ(parse_value_loss("l1"), ValueLossKind::kL1);
}

TEST(BuildValueTableTest, RowsFromStoredAndAugmentedValues) {
  ChainRun st = chain_setup(11, 40);
  Rng aug_rng(4);
  const std::vector<RolloutBuffer> aug{apply_to_buffer(AugmentationSpec::amplitude(0.8, 1.4), st.buf, aug_rng)};
  const ValueTable t = build_value_table(st.net, st.buf, aug);
  ASSERT_EQ(t.rows(), 2u);
  for (std::size_t i = 0; i < st.buf.size(); ++i) {
    EXPECT_EQ(t.current(0, i), st.buf.steps[i].value_pred);
    EXPECT_EQ(t.current(1, i), st.net.value(aug[0].steps[i].obs));
    if (i + 1 < st.buf.size() && !st.buf.steps[i].done()) {
      EXPECT_EQ(t.next(1, i), t.current(1, i + 1));
    }
  }
}

TEST(PpoLossTest, DracTermsMatchStandaloneRegularizers) {
  Rng rng(12);
  for (bool discrete : {true, false}) {
    SyntheticLossProblem p = random_loss_problem(rng, 8, discrete);
    p.cfg.method = PpoMethod::kDrac;
    p.batch.drac_obs = p.batch.obs;
    p.batch.drac_aug_obs = p.batch.obs;
    for (double& x : p.batch.drac_aug_obs.data()) x *= 1.2;
    ad::Graph g;
    const LossTerms t = ppo_loss(g, p.net, p.batch, p.cfg);
    ad::Graph h;
    auto [gp, gv] = drac_regularizers(h, p.net, p.batch.obs, p.batch.drac_aug_obs);
    EXPECT_EQ(t.drac_policy.value()[0], gp.value()[0]);
    EXPECT_EQ(t.drac_value.value()[0], gv.value()[0]);
  }
}
