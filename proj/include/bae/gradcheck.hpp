#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "bae/autodiff.hpp"

namespace bae {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

using LossBuilder = std::function<ad::Var(ad::Graph&, ParamStore&)>;

/// Compares backward() against central differences on every parameter
/// coordinate. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
/// denominator. Parameter values are restored on return; gradients are left
/// holding the analytic result.
GradCheckResult finite_diff_check(const LossBuilder& loss, ParamStore& store, double eps = 1e-5);

}  // namespace bae
