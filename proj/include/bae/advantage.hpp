#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bae/matrix.hpp"
#include "bae/rollout.hpp"

namespace bae {

enum class AdvMethod { kGae, kBae, kMc, kKStep };

struct AdvantageConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  AdvMethod method = AdvMethod::kGae;
  std::size_t k = 1;  // horizon for kKStep
  std::size_t m = 1;  // augmented copies for kBae
  bool normalize = true;

  void validate() const;
};

std::string to_string(AdvMethod m);
/// "gae", "bae", "mc" or "kstep(<k>)"; the k of kstep is written to *k.
AdvMethod parse_adv_method(const std::string& s, std::size_t* k = nullptr);

struct AdvantageEstimate {
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

/// V(f(s_t, v_i)) for augmentation i (row 0 = untransformed) and the value of
/// each step's successor. Within a segment next(i, t) == current(i, t + 1);
/// at a truncation or the buffer end it holds the bootstrap value. After a
/// termination it is ignored.
class ValueTable {
 public:
  ValueTable() = default;
  ValueTable(std::size_t rows, std::size_t steps);
  /// One row from T + 1 values; the successor of step t is values[t + 1].
  static ValueTable from_values(std::span<const double> values);
  /// Stacks rows of T + 1 values each.
  static ValueTable from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return current_.rows(); }
  std::size_t steps() const { return current_.cols(); }
  double current(std::size_t i, std::size_t t) const { return current_(i, t); }
  double& current(std::size_t i, std::size_t t) { return current_(i, t); }
  double next(std::size_t i, std::size_t t) const { return next_(i, t); }
  double& next(std::size_t i, std::size_t t) { return next_(i, t); }
  bool all_finite() const { return current_.all_finite() && next_.all_finite(); }

  /// Single-row table of per-step means over rows (v0 + sum(v_i - v0)/(m+1),
  /// which is exactly v0 when all rows agree).
  ValueTable mean_row() const;
  void set_row(std::size_t i, std::span<const double> current, std::span<const double> next);
  ValueTable row(std::size_t i) const;

 private:
  Matrix current_;
  Matrix next_;
};

/// Row of a ValueTable from stored collection-time values and bootstraps.
std::vector<double> buffer_next_values(const RolloutBuffer& buf, std::span<const double> current,
                                       std::span<const double> bootstrap_values);

/// delta_t = r_t + gamma * V_{t+1} * (1 - terminated_t) - V_t; values has T + 1 entries.
std::vector<double> td_residuals(std::span<const double> values, const Trajectory& traj, double gamma);
std::vector<double> td_residuals(const ValueTable& table, std::size_t row, const Trajectory& traj,
                                 double gamma);

/// Direct k-step sum for augmentation row i, clipped at the segment end.
double kstep_advantage(std::size_t i, std::size_t t, std::size_t k, const ValueTable& table,
                       const Trajectory& traj, double gamma);
/// Mean of kstep_advantage over all rows of the table.
double bootstrap_average(std::size_t t, std::size_t k, const ValueTable& table,
                         const Trajectory& traj, double gamma);

/// GAE recursion on row 0. value_targets = advantages + V_0.
AdvantageEstimate gae(const ValueTable& table, const Trajectory& traj, const AdvantageConfig& cfg);
/// Bootstrap advantage: GAE recursion over the row-averaged values; targets use row 0.
AdvantageEstimate bae(const ValueTable& table, const Trajectory& traj, const AdvantageConfig& cfg);
/// Exponentially weighted k-step sums evaluated term by term with tail-completed
/// weights. Segments must be at most 12 steps long.
std::vector<double> literal_bae_oracle(const ValueTable& table, const Trajectory& traj,
                                       const AdvantageConfig& cfg);
/// Mean 0, population std 1 (std floored at 1e-8). Targets untouched. Needs T >= 2.
AdvantageEstimate normalize_advantages(AdvantageEstimate est);

/// Dispatch on cfg.method (normalization is not applied here).
AdvantageEstimate estimate_advantages(const ValueTable& table, const Trajectory& traj,
                                      const AdvantageConfig& cfg);

/// Index of the last step of the segment containing t.
std::size_t segment_end(const Trajectory& traj, std::size_t t);

}  // namespace bae
