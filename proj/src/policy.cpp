#include "bae/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bae/errors.hpp"

namespace bae {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)

std::size_t head_outputs(const NetSpec& spec) {
  return spec.action.kind == ActionKind::kDiscrete ? spec.action.n : spec.action.dim;
}

std::string layer_name(const std::string& prefix, std::size_t i, const char* what) {
  return prefix + ".l" + std::to_string(i) + "." + what;
}

}  // namespace

Matrix orthogonal_init(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  const std::size_t tall = std::max(rows, cols);
  const std::size_t narrow = std::min(rows, cols);
  // Columns of q (tall x narrow) are orthonormalized by two passes of
  // modified Gram-Schmidt.
  Matrix q(tall, narrow);
  for (double& v : q.data()) v = rng.normal();
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < narrow; ++j) {
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < tall; ++i) dot += q(i, j) * q(i, k);
        for (std::size_t i = 0; i < tall; ++i) q(i, j) -= dot * q(i, k);
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < tall; ++i) norm += q(i, j) * q(i, j);
      norm = std::sqrt(norm);
      for (std::size_t i = 0; i < tall; ++i) q(i, j) /= norm;
    }
  }
  Matrix w = rows >= cols ? q : transpose(q);
  for (double& v : w.data()) v *= gain;
  return w;
}

Matrix stack_obs(std::span<const Obs> obs) {
  if (obs.empty()) return Matrix();
  const std::size_t d = obs.front().size();
  Matrix m(obs.size(), d);
  for (std::size_t r = 0; r < obs.size(); ++r) {
    if (obs[r].size() != d) throw DimensionError("stack_obs: ragged observations");
    std::copy(obs[r].data.begin(), obs[r].data.end(), m.row_span(r).begin());
  }
  return m;
}

Matrix stack_obs(std::span<const Obs> obs, std::span<const std::size_t> indices) {
  if (indices.empty()) return Matrix();
  const std::size_t d = obs[indices.front()].size();
  Matrix m(indices.size(), d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Obs& o = obs[indices[r]];
    if (o.size() != d) throw DimensionError("stack_obs: ragged observations");
    std::copy(o.data.begin(), o.data.end(), m.row_span(r).begin());
  }
  return m;
}

ad::Var gaussian_logprob(ad::Var actions, ad::Var mean, ad::Var log_std_rows) {
  ad::Var z = ad::mul(ad::sub(actions, mean), ad::exp(ad::neg(log_std_rows)));
  ad::Var per_dim = ad::sub(ad::scale(ad::square(z), -0.5), log_std_rows);
  return ad::sum_rows(ad::add_scalar(per_dim, -kHalfLog2Pi));
}

ad::Var categorical_logprob(ad::Var log_probs, std::span<const Action> actions) {
  const Matrix& lp = log_probs.value();
  if (actions.size() != lp.rows())
    throw DimensionError("categorical_logprob: " + std::to_string(actions.size()) +
                         " actions for " + lp.shape_str() + " log-probabilities");
  Matrix onehot(lp.rows(), lp.cols(), 0.0);
  for (std::size_t r = 0; r < actions.size(); ++r) {
    const auto a = actions[r].index;
    if (a < 0 || static_cast<std::size_t>(a) >= lp.cols())
      throw ContractError("categorical_logprob: action index out of range");
    onehot(r, static_cast<std::size_t>(a)) = 1.0;
  }
  return ad::sum_rows(ad::mul(log_probs, log_probs.graph()->constant(std::move(onehot))));
}

ad::Var categorical_entropy(ad::Var log_probs) {
  return ad::neg(ad::sum_rows(ad::mul(ad::exp(log_probs), log_probs)));
}

ActorCritic::ActorCritic(NetSpec spec, ParamStore params)
    : spec_(std::move(spec)), params_(std::move(params)) {}

ActorCritic ActorCritic::init(const NetSpec& spec, Rng& rng) {
  if (spec.obs_dim == 0) throw ConfigError("ActorCritic: obs_dim must be >= 1");
  if (head_outputs(spec) == 0) throw ConfigError("ActorCritic: action space is empty");
  for (std::size_t h : spec.hidden)
    if (h == 0) throw ConfigError("ActorCritic: hidden layer sizes must be >= 1");

  ParamStore store;
  const double hidden_gain = std::sqrt(2.0);
  auto add_trunk = [&](const std::string& prefix) {
    std::size_t in = spec.obs_dim;
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
      store.add(layer_name(prefix, i, "w"), orthogonal_init(in, spec.hidden[i], hidden_gain, rng));
      store.add(layer_name(prefix, i, "b"), Matrix(1, spec.hidden[i], 0.0));
      in = spec.hidden[i];
    }
  };
  const std::size_t features = spec.hidden.empty() ? spec.obs_dim : spec.hidden.back();
  if (spec.trunks == TrunkMode::kShared) {
    add_trunk("shared");
  } else {
    add_trunk("pi");
    add_trunk("v");
  }
  const std::size_t outs = head_outputs(spec);
  store.add("pi.head.w", orthogonal_init(features, outs, 0.01, rng));
  store.add("pi.head.b", Matrix(1, outs, 0.0));
  if (spec.action.kind == ActionKind::kContinuous) store.add("pi.log_std", Matrix(1, outs, 0.0));
  store.add("v.head.w", orthogonal_init(features, 1, 1.0, rng));
  store.add("v.head.b", Matrix(1, 1, 0.0));
  return ActorCritic(spec, std::move(store));
}

ad::Var ActorCritic::leaf(ad::Graph& g, const std::string& name, ParamStore* sink) const {
  return sink ? g.param(*sink, name) : g.view(params_.value(name));
}

ad::Var ActorCritic::trunk(ad::Graph& g, ad::Var x, const std::string& prefix,
                           ParamStore* sink) const {
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    ad::Var pre = ad::affine(x, leaf(g, layer_name(prefix, i, "w"), sink),
                             leaf(g, layer_name(prefix, i, "b"), sink));
    x = spec_.activation == Activation::kTanh ? ad::tanh(pre) : ad::relu(pre);
  }
  return x;
}

std::pair<ad::Var, ad::Var> ActorCritic::policy_head_impl(ad::Graph& g, ad::Var features,
                                                          ParamStore* sink) const {
  ad::Var out = ad::affine(features, leaf(g, "pi.head.w", sink), leaf(g, "pi.head.b", sink));
  ad::Var log_std;
  if (!discrete()) log_std = leaf(g, "pi.log_std", sink);
  return {out, log_std};
}

ad::Var ActorCritic::value_head_impl(ad::Graph& g, ad::Var features, ParamStore* sink) const {
  return ad::affine(features, leaf(g, "v.head.w", sink), leaf(g, "v.head.b", sink));
}

namespace {

void check_obs_width(const NetSpec& spec, const Matrix& obs) {
  if (obs.cols() != spec.obs_dim)
    throw DimensionError("ActorCritic: observation width " + std::to_string(obs.cols()) +
                         " but network expects " + std::to_string(spec.obs_dim));
}

}  // namespace

BatchEval ActorCritic::evaluate_impl(ad::Graph& g, const Matrix& obs, std::span<const Action> actions,
                                     ParamStore* sink) const {
  check_obs_width(spec_, obs);
  if (actions.size() != obs.rows())
    throw DimensionError("evaluate: " + std::to_string(actions.size()) + " actions for " +
                         std::to_string(obs.rows()) + " observations");
  ad::Var x = g.constant(obs);
  ad::Var pi_features, v_features;
  if (spec_.trunks == TrunkMode::kShared) {
    pi_features = v_features = trunk(g, x, "shared", sink);
  } else {
    pi_features = trunk(g, x, "pi", sink);
    v_features = trunk(g, x, "v", sink);
  }
  BatchEval out;
  auto [dist, log_std] = policy_head_impl(g, pi_features, sink);
  out.dist = dist;
  out.log_std = log_std;
  out.values = value_head_impl(g, v_features, sink);
  if (discrete()) {
    ad::Var logp = ad::log_softmax_rows(dist);
    out.logprobs = categorical_logprob(logp, actions);
    out.entropies = categorical_entropy(logp);
  } else {
    const std::size_t d = spec_.action.dim;
    Matrix a(actions.size(), d);
    for (std::size_t r = 0; r < actions.size(); ++r) {
      if (actions[r].values.size() != d)
        throw DimensionError("evaluate: continuous action has wrong dimension");
      std::copy(actions[r].values.begin(), actions[r].values.end(), a.row_span(r).begin());
    }
    ad::Var ls_rows = ad::broadcast_rows(log_std, obs.rows());
    out.logprobs = gaussian_logprob(g.constant(std::move(a)), dist, ls_rows);
    out.entropies = ad::sum_rows(ad::add_scalar(ls_rows, 0.5 + kHalfLog2Pi));
  }
  return out;
}

BatchEval ActorCritic::evaluate(ad::Graph& g, const Matrix& obs, std::span<const Action> actions,
                                bool trainable) {
  return evaluate_impl(g, obs, actions, trainable ? &params_ : nullptr);
}

BatchEval ActorCritic::evaluate(ad::Graph& g, const Matrix& obs,
                                std::span<const Action> actions) const {
  return evaluate_impl(g, obs, actions, nullptr);
}

ad::Var ActorCritic::value_head(ad::Graph& g, const Matrix& obs, bool trainable) {
  check_obs_width(spec_, obs);
  ParamStore* sink = trainable ? &params_ : nullptr;
  ad::Var x = g.constant(obs);
  return value_head_impl(g, trunk(g, x, spec_.trunks == TrunkMode::kShared ? "shared" : "v", sink),
                         sink);
}

std::pair<ad::Var, ad::Var> ActorCritic::policy_head(ad::Graph& g, const Matrix& obs,
                                                     bool trainable) {
  check_obs_width(spec_, obs);
  ParamStore* sink = trainable ? &params_ : nullptr;
  ad::Var x = g.constant(obs);
  return policy_head_impl(g, trunk(g, x, spec_.trunks == TrunkMode::kShared ? "shared" : "pi", sink),
                          sink);
}

double ActorCritic::value(const Obs& obs) const {
  ad::Graph g;
  Matrix x = Matrix::row(obs.data);
  check_obs_width(spec_, x);
  ad::Var in = g.constant(std::move(x));
  ad::Var v = value_head_impl(
      g, trunk(g, in, spec_.trunks == TrunkMode::kShared ? "shared" : "v", nullptr), nullptr);
  return v.value()[0];
}

std::vector<double> ActorCritic::action_probs(const Obs& obs) const {
  if (!discrete()) throw ContractError("action_probs: policy is not categorical");
  ad::Graph g;
  Matrix x = Matrix::row(obs.data);
  check_obs_width(spec_, x);
  ad::Var in = g.constant(std::move(x));
  auto [logits, unused] = policy_head_impl(
      g, trunk(g, in, spec_.trunks == TrunkMode::kShared ? "shared" : "pi", nullptr), nullptr);
  ad::Var logp = ad::log_softmax_rows(logits);
  std::vector<double> p(logp.cols());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logp.value()[i]);
  return p;
}

PolicyOutput ActorCritic::act(const Obs& obs, Rng& rng, bool greedy) const {
  ad::Graph g;
  Matrix x = Matrix::row(obs.data);
  check_obs_width(spec_, x);
  ad::Var in = g.constant(std::move(x));
  ad::Var pi_features, v_features;
  if (spec_.trunks == TrunkMode::kShared) {
    pi_features = v_features = trunk(g, in, "shared", nullptr);
  } else {
    pi_features = trunk(g, in, "pi", nullptr);
    v_features = trunk(g, in, "v", nullptr);
  }
  auto [dist, log_std] = policy_head_impl(g, pi_features, nullptr);
  PolicyOutput out;
  out.value = value_head_impl(g, v_features, nullptr).value()[0];

  if (discrete()) {
    ad::Var logp = ad::log_softmax_rows(dist);
    const Matrix& lp = logp.value();
    std::vector<double> probs(lp.cols());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(lp[i]);
    std::size_t a = 0;
    if (greedy) {
      a = static_cast<std::size_t>(std::max_element(lp.data().begin(), lp.data().end()) -
                                   lp.data().begin());
    } else {
      a = rng.categorical(probs);
    }
    out.action = Action::discrete(static_cast<std::int64_t>(a));
    out.logprob = categorical_logprob(logp, std::span<const Action>(&out.action, 1)).value()[0];
    out.entropy = categorical_entropy(logp).value()[0];
  } else {
    const Matrix& mean = dist.value();
    const Matrix& ls = log_std.value();
    std::vector<double> a(mean.cols());
    for (std::size_t j = 0; j < a.size(); ++j)
      a[j] = greedy ? mean[j] : mean[j] + std::exp(ls[j]) * rng.normal();
    out.action = Action::continuous(a);
    out.logprob = gaussian_logprob(g.constant(Matrix::row(a)), dist, log_std).value()[0];
    double ent = 0.0;
    for (std::size_t j = 0; j < ls.cols(); ++j) ent += ls[j] + (0.5 + kHalfLog2Pi);
    out.entropy = ent;
  }
  return out;
}

}  // namespace bae
