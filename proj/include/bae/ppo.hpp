#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bae/advantage.hpp"
#include "bae/autodiff.hpp"
#include "bae/policy.hpp"
#include "bae/rollout.hpp"

namespace bae {

enum class PpoMethod { kGae, kBae, kRad, kDrac };
enum class ValueLossKind { kMse, kL1 };

std::string to_string(PpoMethod m);
PpoMethod parse_ppo_method(const std::string& s);
std::string to_string(ValueLossKind k);
ValueLossKind parse_value_loss(const std::string& s);

struct PPOConfig {
  double clip = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
  double lr = 3e-4;
  double max_grad_norm = 0.5;
  std::size_t epochs = 4;
  std::size_t batch_size = 64;
  PpoMethod method = PpoMethod::kGae;
  double drac_coef = 0.1;
  ValueLossKind value_loss = ValueLossKind::kMse;
  /// RAD: recompute theta_old log-probs on augmented observations instead of
  /// reusing the collection-time values.
  bool rad_recompute_logprob = false;

  void validate() const;
};

struct MinibatchStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  double drac_policy = 0.0;
  double drac_value = 0.0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  std::vector<MinibatchStats> minibatches;

  bool operator==(const UpdateStats& o) const;
};

/// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  explicit Adam(const ParamStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(ParamStore& params, double lr);
  std::uint64_t steps() const { return t_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  bool operator==(const Adam& o) const = default;

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

/// -mean(min(r * A, clip(r, 1 - eps, 1 + eps) * A)); ratios and advantages are N x 1.
ad::Var policy_loss(ad::Var ratios, ad::Var advantages, double clip);
double policy_loss(std::span<const double> ratios, std::span<const double> advantages, double clip);
/// 0.5 * mean squared error, or mean absolute error for kL1.
ad::Var value_loss(ad::Var predicted, ad::Var targets, ValueLossKind kind);
double value_loss(std::span<const double> predicted, std::span<const double> targets,
                  ValueLossKind kind);

/// (G_pi, G_V): mean KL(pi(.|s) || pi(.|f(s))) and mean (V(s) - V(f(s)))^2.
/// The untransformed branch enters as a constant.
std::pair<ad::Var, ad::Var> drac_regularizers(ad::Graph& g, ActorCritic& net, const Matrix& obs,
                                              const Matrix& aug_obs);

struct LossTerms {
  ad::Var total;
  ad::Var policy;
  ad::Var value;
  ad::Var entropy;
  ad::Var ratios;
  ad::Var drac_policy;
  ad::Var drac_value;
};

/// Minibatch inputs for the PPO objective.
struct LossBatch {
  Matrix obs;                      // observations the policy/value are trained on
  std::vector<Action> actions;
  std::vector<double> old_logprobs;
  std::vector<double> advantages;
  std::vector<double> value_targets;
  Matrix drac_obs;                 // DRAC only: untransformed observations
  Matrix drac_aug_obs;             // DRAC only: their transformed twins
};

/// policy + vf_coef * value - ent_coef * entropy (+ drac_coef * (G_pi + G_V) for DRAC).
LossTerms ppo_loss(ad::Graph& g, ActorCritic& net, const LossBatch& batch, const PPOConfig& cfg);

/// Row 0 from the stored collection values, rows 1..m by evaluating V on each
/// transformed buffer.
ValueTable build_value_table(const ActorCritic& net, const RolloutBuffer& base,
                             std::span<const RolloutBuffer> augmented);

/// Epochs of minibatch updates. RAD trains on aug_buffers[0]; DRAC regularizes
/// against it; GAE and BAE use the untransformed buffer. Throws NumericalError
/// if the loss becomes non-finite.
UpdateStats update(ActorCritic& net, Adam& opt, const RolloutBuffer& buffer,
                   std::span<const RolloutBuffer> aug_buffers, const AdvantageEstimate& est,
                   const PPOConfig& cfg, Rng& rng);

}  // namespace bae
