#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bae/autodiff.hpp"
#include "bae/envs.hpp"
#include "bae/param_store.hpp"
#include "bae/rng.hpp"

namespace bae {

enum class TrunkMode { kShared, kSeparate };
enum class Activation { kTanh, kRelu };

struct NetSpec {
  std::size_t obs_dim = 0;
  ActionSpace action;
  std::vector<std::size_t> hidden{64, 64};
  TrunkMode trunks = TrunkMode::kSeparate;
  Activation activation = Activation::kTanh;
};

struct PolicyOutput {
  Action action;
  double logprob = 0.0;
  double entropy = 0.0;
  double value = 0.0;
};

/// Differentiable outputs for a batch, each N x 1. `dist` holds logits
/// (categorical) or means (Gaussian); `log_std` is 1 x d for Gaussian heads.
struct BatchEval {
  ad::Var logprobs;
  ad::Var entropies;
  ad::Var values;
  ad::Var dist;
  ad::Var log_std;
};

/// Orthogonal matrix scaled by gain: columns orthonormal when rows >= cols,
/// rows orthonormal otherwise.
Matrix orthogonal_init(std::size_t rows, std::size_t cols, double gain, Rng& rng);

/// Stacks flattened observations into an N x D matrix.
Matrix stack_obs(std::span<const Obs> obs);
Matrix stack_obs(std::span<const Obs> obs, std::span<const std::size_t> indices);

class ActorCritic {
 public:
  ActorCritic(NetSpec spec, ParamStore params);

  /// Orthogonal init: gain sqrt(2) on hidden layers, 0.01 on the policy head,
  /// 1 on the value head; zero biases; log-std 0.
  static ActorCritic init(const NetSpec& spec, Rng& rng);

  const NetSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  bool discrete() const { return spec_.action.kind == ActionKind::kDiscrete; }

  /// Samples (or takes the mode when greedy) from the policy head.
  PolicyOutput act(const Obs& obs, Rng& rng, bool greedy = false) const;
  /// V(s) for a single observation through the same path act() uses.
  double value(const Obs& obs) const;
  /// Categorical probabilities for one observation.
  std::vector<double> action_probs(const Obs& obs) const;

  /// Batched forward. With trainable=true parameters are graph leaves whose
  /// gradients accumulate into params(); otherwise they enter as constants.
  BatchEval evaluate(ad::Graph& g, const Matrix& obs, std::span<const Action> actions,
                     bool trainable = true);
  BatchEval evaluate(ad::Graph& g, const Matrix& obs, std::span<const Action> actions) const;
  ad::Var value_head(ad::Graph& g, const Matrix& obs, bool trainable = true);
  /// Distribution parameters only (logits or means, and log-std).
  std::pair<ad::Var, ad::Var> policy_head(ad::Graph& g, const Matrix& obs, bool trainable = true);

 private:
  // `sink` is params_ for differentiable leaves, nullptr for constant views.
  ad::Var leaf(ad::Graph& g, const std::string& name, ParamStore* sink) const;
  ad::Var trunk(ad::Graph& g, ad::Var x, const std::string& prefix, ParamStore* sink) const;
  BatchEval evaluate_impl(ad::Graph& g, const Matrix& obs, std::span<const Action> actions,
                          ParamStore* sink) const;
  std::pair<ad::Var, ad::Var> policy_head_impl(ad::Graph& g, ad::Var x, ParamStore* sink) const;
  ad::Var value_head_impl(ad::Graph& g, ad::Var x, ParamStore* sink) const;

  NetSpec spec_;
  ParamStore params_;
};

/// log N(a; mean, exp(log_std)) summed over dimensions, N x 1.
ad::Var gaussian_logprob(ad::Var actions, ad::Var mean, ad::Var log_std_rows);
/// Row-wise categorical log-probability of the chosen actions, N x 1.
ad::Var categorical_logprob(ad::Var log_probs, std::span<const Action> actions);
/// Row-wise categorical entropy, N x 1.
ad::Var categorical_entropy(ad::Var log_probs);

}  // namespace bae
