#include "bae/ppo.hpp"

#include <algorithm>
#include <cmath>

#include "bae/errors.hpp"

namespace bae {

std::string to_string(PpoMethod m) {
  switch (m) {
    case PpoMethod::kGae: return "gae";
    case PpoMethod::kBae: return "bae";
    case PpoMethod::kRad: return "rad";
    case PpoMethod::kDrac: return "drac";
  }
  return "gae";
}

PpoMethod parse_ppo_method(const std::string& s) {
  if (s == "gae") return PpoMethod::kGae;
  if (s == "bae") return PpoMethod::kBae;
  if (s == "rad") return PpoMethod::kRad;
  if (s == "drac") return PpoMethod::kDrac;
  throw ConfigError("unknown method '" + s + "' (expected gae, bae, rad or drac)");
}

std::string to_string(ValueLossKind k) { return k == ValueLossKind::kMse ? "mse" : "l1"; }

ValueLossKind parse_value_loss(const std::string& s) {
  if (s == "mse") return ValueLossKind::kMse;
  if (s == "l1") return ValueLossKind::kL1;
  throw ConfigError("unknown value loss '" + s + "' (expected mse or l1)");
}

void PPOConfig::validate() const {
  if (!(clip > 0.0)) throw ConfigError("ppo.clip must be positive");
  if (vf_coef < 0.0 || ent_coef < 0.0 || drac_coef < 0.0)
    throw ConfigError("ppo coefficients must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("ppo.lr must be positive");
  if (!(max_grad_norm > 0.0)) throw ConfigError("ppo.max_grad_norm must be positive");
  if (epochs < 1) throw ConfigError("rollout.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("rollout.batch_size must be >= 1");
}

bool UpdateStats::operator==(const UpdateStats& o) const {
  auto same = [](const MinibatchStats& a, const MinibatchStats& b) {
    return a.policy_loss == b.policy_loss && a.value_loss == b.value_loss && a.entropy == b.entropy &&
           a.approx_kl == b.approx_kl && a.clip_fraction == b.clip_fraction &&
           a.grad_norm == b.grad_norm && a.drac_policy == b.drac_policy &&
           a.drac_value == b.drac_value;
  };
  if (minibatches.size() != o.minibatches.size()) return false;
  for (std::size_t i = 0; i < minibatches.size(); ++i)
    if (!same(minibatches[i], o.minibatches[i])) return false;
  return policy_loss == o.policy_loss && value_loss == o.value_loss && entropy == o.entropy &&
         approx_kl == o.approx_kl && clip_fraction == o.clip_fraction && grad_norm == o.grad_norm;
}

// ---------------------------------------------------------------------- Adam

Adam::Adam(const ParamStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.value(i).rows(), params.value(i).cols(), 0.0);
    v_.emplace_back(params.value(i).rows(), params.value(i).cols(), 0.0);
  }
}

void Adam::step(ParamStore& params, double lr) {
  if (params.size() != m_.size()) throw ContractError("Adam: parameter count changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = params.value(p);
    const Matrix& g = params.grad(p);
    Matrix& m = m_[p];
    Matrix& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
  params.increment_step();
}

// -------------------------------------------------------------------- losses

ad::Var policy_loss(ad::Var ratios, ad::Var advantages, double clip) {
  ad::Var unclipped = ad::mul(ratios, advantages);
  ad::Var clipped = ad::mul(ad::clamp(ratios, 1.0 - clip, 1.0 + clip), advantages);
  return ad::neg(ad::mean(ad::minimum(unclipped, clipped)));
}

double policy_loss(std::span<const double> ratios, std::span<const double> advantages, double clip) {
  if (ratios.size() != advantages.size() || ratios.empty())
    throw ContractError("policy_loss: inputs must be non-empty and equal length");
  double acc = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double r = ratios[i], a = advantages[i];
    acc += std::min(r * a, std::clamp(r, 1.0 - clip, 1.0 + clip) * a);
  }
  return -acc / static_cast<double>(ratios.size());
}

ad::Var value_loss(ad::Var predicted, ad::Var targets, ValueLossKind kind) {
  ad::Var diff = ad::sub(predicted, targets);
  if (kind == ValueLossKind::kL1) return ad::mean(ad::abs(diff));
  return ad::scale(ad::mean(ad::square(diff)), 0.5);
}

double value_loss(std::span<const double> predicted, std::span<const double> targets,
                  ValueLossKind kind) {
  if (predicted.size() != targets.size() || predicted.empty())
    throw ContractError("value_loss: inputs must be non-empty and equal length");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - targets[i];
    acc += kind == ValueLossKind::kL1 ? std::fabs(d) : 0.5 * d * d;
  }
  return acc / static_cast<double>(predicted.size());
}

namespace {

// Regularizers against a precomputed reference branch.
std::pair<ad::Var, ad::Var> drac_against(ad::Graph& g, ActorCritic& net, const Matrix& ref_dist,
                                         const Matrix& ref_log_std, const Matrix& ref_value,
                                         const Matrix& obs, const Matrix& aug_obs) {
  auto [aug_dist, aug_log_std] = net.policy_head(g, aug_obs, true);
  ad::Var aug_value = net.value_head(g, aug_obs, true);

  ad::Var g_value = ad::mean(ad::square(ad::sub(g.constant(ref_value), aug_value)));

  ad::Var g_policy;
  if (net.discrete()) {
    ad::Graph tmp;
    Matrix ref_logp = ad::log_softmax_rows(tmp.constant(ref_dist)).value();
    Matrix ref_p = ref_logp;
    for (double& v : ref_p.data()) v = std::exp(v);
    ad::Var logq = ad::log_softmax_rows(aug_dist);
    ad::Var p = g.constant(ref_p);
    ad::Var kl_rows = ad::sum_rows(ad::mul(p, ad::sub(g.constant(ref_logp), logq)));
    g_policy = ad::mean(kl_rows);
  } else {
    const std::size_t n = obs.rows();
    Matrix ls1(n, ref_log_std.cols());
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < ls1.cols(); ++c) ls1(r, c) = ref_log_std(0, c);
    Matrix var1 = ls1;
    for (double& v : var1.data()) v = std::exp(2.0 * v);
    ad::Var ls2 = ad::broadcast_rows(aug_log_std, n);
    ad::Var mean_diff = ad::sub(g.constant(ref_dist), aug_dist);
    // log(s2/s1) + (s1^2 + (m1-m2)^2) / (2 s2^2) - 1/2
    ad::Var quad = ad::mul(ad::add(g.constant(var1), ad::square(mean_diff)),
                           ad::scale(ad::exp(ad::scale(ls2, -2.0)), 0.5));
    ad::Var per_dim = ad::add_scalar(ad::add(ad::sub(ls2, g.constant(ls1)), quad), -0.5);
    g_policy = ad::mean(ad::sum_rows(per_dim));
  }
  return {g_policy, g_value};
}

}  // namespace

std::pair<ad::Var, ad::Var> drac_regularizers(ad::Graph& g, ActorCritic& net, const Matrix& obs,
                                              const Matrix& aug_obs) {
  if (!obs.same_shape(aug_obs))
    throw DimensionError("drac_regularizers: observation batches differ in shape");
  // Reference branch: plain values, no gradient.
  Matrix ref_dist, ref_log_std, ref_value;
  {
    ad::Graph ref;
    auto [dist, log_std] = net.policy_head(ref, obs, false);
    ref_dist = dist.value();
    if (log_std.valid()) ref_log_std = log_std.value();
    ref_value = net.value_head(ref, obs, false).value();
  }
  return drac_against(g, net, ref_dist, ref_log_std, ref_value, obs, aug_obs);
}

LossTerms ppo_loss(ad::Graph& g, ActorCritic& net, const LossBatch& batch, const PPOConfig& cfg) {
  const std::size_t n = batch.obs.rows();
  if (batch.actions.size() != n || batch.old_logprobs.size() != n || batch.advantages.size() != n ||
      batch.value_targets.size() != n)
    throw DimensionError("ppo_loss: minibatch fields differ in length");
  BatchEval ev = net.evaluate(g, batch.obs, batch.actions, true);
  LossTerms t;
  ad::Var old_lp = g.constant(Matrix::column(batch.old_logprobs));
  t.ratios = ad::exp(ad::sub(ev.logprobs, old_lp));
  t.policy = policy_loss(t.ratios, g.constant(Matrix::column(batch.advantages)), cfg.clip);
  t.value = value_loss(ev.values, g.constant(Matrix::column(batch.value_targets)), cfg.value_loss);
  t.entropy = ad::mean(ev.entropies);
  t.total = ad::sub(ad::add(t.policy, ad::scale(t.value, cfg.vf_coef)), ad::scale(t.entropy, cfg.ent_coef));
  if (cfg.method == PpoMethod::kDrac) {
    // Reuse the main forward pass as the reference branch when the observations match.
    auto [gp, gv] = batch.drac_obs == batch.obs && batch.obs.same_shape(batch.drac_aug_obs)
                        ? drac_against(g, net, ev.dist.value(),
                                       ev.log_std.valid() ? ev.log_std.value() : Matrix{},
                                       ev.values.value(), batch.drac_obs, batch.drac_aug_obs)
                        : drac_regularizers(g, net, batch.drac_obs, batch.drac_aug_obs);
    t.drac_policy = gp;
    t.drac_value = gv;
    t.total = ad::add(t.total, ad::scale(ad::add(gp, gv), cfg.drac_coef));
  }
  return t;
}

ValueTable build_value_table(const ActorCritic& net, const RolloutBuffer& base,
                             std::span<const RolloutBuffer> augmented) {
  const std::size_t n = base.size();
  ValueTable table(1 + augmented.size(), n);
  std::vector<double> cur(n), boot(base.bootstraps.size());
  for (std::size_t t = 0; t < n; ++t) cur[t] = base.steps[t].value_pred;
  for (std::size_t b = 0; b < boot.size(); ++b) boot[b] = base.bootstraps[b].value;
  table.set_row(0, cur, buffer_next_values(base, cur, boot));
  for (std::size_t i = 0; i < augmented.size(); ++i) {
    const RolloutBuffer& aug = augmented[i];
    if (aug.size() != n || aug.bootstraps.size() != base.bootstraps.size())
      throw ContractError("build_value_table: augmented buffer does not mirror the base buffer");
    for (std::size_t t = 0; t < n; ++t) cur[t] = net.value(aug.steps[t].obs);
    for (std::size_t b = 0; b < boot.size(); ++b) boot[b] = net.value(aug.bootstraps[b].obs);
    table.set_row(i + 1, cur, buffer_next_values(base, cur, boot));
  }
  return table;
}

namespace {

void check_finite(const LossTerms& t, std::size_t minibatch) {
  if (std::isfinite(t.total.value()[0])) return;
  std::string msg = "non-finite PPO loss in minibatch " + std::to_string(minibatch) + ": policy=" +
                    std::to_string(t.policy.value()[0]) + " value=" + std::to_string(t.value.value()[0]) +
                    " entropy=" + std::to_string(t.entropy.value()[0]);
  if (t.drac_policy.valid())
    msg += " drac_policy=" + std::to_string(t.drac_policy.value()[0]) +
           " drac_value=" + std::to_string(t.drac_value.value()[0]);
  throw NumericalError(msg);
}

}  // namespace

UpdateStats update(ActorCritic& net, Adam& opt, const RolloutBuffer& buffer,
                   std::span<const RolloutBuffer> aug_buffers, const AdvantageEstimate& est,
                   const PPOConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = buffer.size();
  if (est.advantages.size() != n || est.value_targets.size() != n)
    throw ContractError("update: advantage estimate does not match the buffer");
  const bool needs_aug = cfg.method == PpoMethod::kRad || cfg.method == PpoMethod::kDrac;
  if (needs_aug && (aug_buffers.empty() || aug_buffers[0].size() != n))
    throw ContractError("update: " + to_string(cfg.method) + " needs an augmented buffer");

  const RolloutBuffer& train_buf = cfg.method == PpoMethod::kRad ? aug_buffers[0] : buffer;
  std::vector<Obs> train_obs, orig_obs, aug_obs;
  train_obs.reserve(n);
  for (const auto& s : train_buf.steps) train_obs.push_back(s.obs);
  if (cfg.method == PpoMethod::kDrac) {
    for (const auto& s : buffer.steps) orig_obs.push_back(s.obs);
    for (const auto& s : aug_buffers[0].steps) aug_obs.push_back(s.obs);
  }

  std::vector<double> old_logprobs(n);
  for (std::size_t t = 0; t < n; ++t) old_logprobs[t] = buffer.steps[t].logprob;
  if (cfg.method == PpoMethod::kRad && cfg.rad_recompute_logprob) {
    std::vector<Action> all_actions;
    for (const auto& s : buffer.steps) all_actions.push_back(s.action);
    ad::Graph g;
    const ActorCritic& frozen = net;
    BatchEval ev = frozen.evaluate(g, stack_obs(train_obs), all_actions);
    for (std::size_t t = 0; t < n; ++t) old_logprobs[t] = ev.logprobs.value()[t];
  }

  UpdateStats stats;
  const auto batches = minibatches(n, cfg.batch_size, cfg.epochs, rng);
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const auto& idx = batches[bi];
    LossBatch batch;
    batch.obs = stack_obs(train_obs, idx);
    for (std::size_t i : idx) {
      batch.actions.push_back(buffer.steps[i].action);
      batch.old_logprobs.push_back(old_logprobs[i]);
      batch.advantages.push_back(est.advantages[i]);
      batch.value_targets.push_back(est.value_targets[i]);
    }
    if (cfg.method == PpoMethod::kDrac) {
      batch.drac_obs = stack_obs(orig_obs, idx);
      batch.drac_aug_obs = stack_obs(aug_obs, idx);
    }

    net.params().zero_grads();
    ad::Graph g;
    LossTerms terms = ppo_loss(g, net, batch, cfg);
    check_finite(terms, bi);
    g.backward(terms.total);

    MinibatchStats mb;
    mb.policy_loss = terms.policy.value()[0];
    mb.value_loss = terms.value.value()[0];
    mb.entropy = terms.entropy.value()[0];
    if (terms.drac_policy.valid()) {
      mb.drac_policy = terms.drac_policy.value()[0];
      mb.drac_value = terms.drac_value.value()[0];
    }
    const Matrix& ratios = terms.ratios.value();
    double kl = 0.0, clipped = 0.0;
    for (double r : ratios.data()) {
      kl += (r - 1.0) - std::log(r);
      if (std::fabs(r - 1.0) > cfg.clip) clipped += 1.0;
    }
    mb.approx_kl = kl / static_cast<double>(ratios.size());
    mb.clip_fraction = clipped / static_cast<double>(ratios.size());

    mb.grad_norm = net.params().grad_norm();
    if (!std::isfinite(mb.grad_norm)) throw NumericalError("non-finite gradient norm in PPO update");
    if (mb.grad_norm > cfg.max_grad_norm) net.params().scale_grads(cfg.max_grad_norm / (mb.grad_norm + 1e-6));
    opt.step(net.params(), cfg.lr);
    stats.minibatches.push_back(mb);
  }

  const double inv = 1.0 / static_cast<double>(stats.minibatches.size());
  for (const auto& mb : stats.minibatches) {
    stats.policy_loss += mb.policy_loss * inv;
    stats.value_loss += mb.value_loss * inv;
    stats.entropy += mb.entropy * inv;
    stats.approx_kl += mb.approx_kl * inv;
    stats.clip_fraction += mb.clip_fraction * inv;
    stats.grad_norm += mb.grad_norm * inv;
  }
  return stats;
}

}  // namespace bae
