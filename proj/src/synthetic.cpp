#include "bae/synthetic.hpp"

#include <cmath>

namespace bae {

SyntheticSegment random_segment(Rng& rng, std::size_t max_len, std::size_t rows, bool identical_rows,
                                double p_done) {
  const std::size_t T = 1 + rng.index(max_len);
  SyntheticSegment s;
  s.traj.rewards.resize(T);
  s.traj.terminated.assign(T, false);
  s.traj.truncated.assign(T, false);
  for (std::size_t t = 0; t < T; ++t) {
    s.traj.rewards[t] = rng.normal();
    const double u = rng.uniform();
    if (u < 0.5 * p_done) s.traj.terminated[t] = true;
    else if (u < p_done) s.traj.truncated[t] = true;
  }
  s.table = ValueTable(rows, T);
  std::vector<double> cur(T), next(T), base_cur(T), base_next(T);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      cur[t] = (i == 0 || !identical_rows) ? rng.normal() : base_cur[t];
      if (i > 0 && !identical_rows) cur[t] = base_cur[t] + 0.3 * cur[t];
    }
    for (std::size_t t = 0; t < T; ++t) {
      const bool boundary = s.traj.done(t) || t + 1 == T;
      if (!boundary) next[t] = cur[t + 1];
      else if (i > 0 && identical_rows) next[t] = base_next[t];
      else next[t] = rng.normal();
    }
    if (i == 0) {
      base_cur = cur;
      base_next = next;
    }
    s.table.set_row(i, cur, next);
  }
  return s;
}

SyntheticLossProblem random_loss_problem(Rng& rng, std::size_t batch, bool discrete, double scale) {
  NetSpec spec;
  spec.obs_dim = 4;
  if (discrete) {
    spec.action.kind = ActionKind::kDiscrete;
    spec.action.n = 3;
  } else {
    spec.action.kind = ActionKind::kContinuous;
    spec.action.dim = 2;
  }
  spec.hidden = {6, 5};
  spec.activation = Activation::kTanh;
  Rng init(rng.next_u64());
  ActorCritic net = ActorCritic::init(spec, init);
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    Matrix& w = net.params().value(p);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * rng.normal();
  }

  LossBatch b;
  b.obs = Matrix(batch, spec.obs_dim);
  for (std::size_t i = 0; i < b.obs.size(); ++i) b.obs[i] = rng.normal();
  for (std::size_t n = 0; n < batch; ++n) {
    if (discrete) {
      b.actions.push_back(Action::discrete(static_cast<std::int64_t>(rng.index(spec.action.n))));
    } else {
      std::vector<double> a(spec.action.dim);
      for (double& x : a) x = rng.normal();
      b.actions.push_back(Action::continuous(std::move(a)));
    }
    b.advantages.push_back(rng.normal());
    b.value_targets.push_back(rng.normal());
  }

  PPOConfig cfg;
  cfg.ent_coef = 0.05;
  // Old log-probs near the current ones, kept away from the clip kinks.
  ad::Graph g;
  const BatchEval ev = std::as_const(net).evaluate(g, b.obs, b.actions);
  for (std::size_t n = 0; n < batch; ++n) {
    const double cur = ev.logprobs.value()[n];
    double log_ratio = 0.25 * rng.normal();
    for (double edge : {std::log1p(cfg.clip), std::log1p(-cfg.clip)})
      if (std::abs(log_ratio - edge) < 1e-3) log_ratio += 0.01;
    b.old_logprobs.push_back(cur - log_ratio);
  }
  return SyntheticLossProblem{std::move(net), std::move(b), cfg};
}

}  // namespace bae
