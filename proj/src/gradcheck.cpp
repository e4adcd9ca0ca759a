#include "bae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bae/errors.hpp"

namespace bae {

namespace {

double eval_loss(const LossBuilder& loss, ParamStore& store) {
  ad::Graph g;
  ad::Var out = loss(g, store);
  if (!out.value().is_scalar()) throw ContractError("finite_diff_check: loss must be 1x1");
  return out.value()[0];
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& loss, ParamStore& store, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");
  store.zero_grads();
  {
    ad::Graph g;
    ad::Var out = loss(g, store);
    g.backward(out);
  }

  GradCheckResult res;
  for (std::size_t p = 0; p < store.size(); ++p) {
    Matrix& w = store.value(p);
    const Matrix& grad = store.grad(p);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double up = eval_loss(loss, store);
      w[i] = orig - eps;
      const double down = eval_loss(loss, store);
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grad[i];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(analytic - numeric) / denom;
      ++res.coordinates;
      if (rel > res.max_rel_error || res.coordinates == 1) {
        res.max_rel_error = std::max(res.max_rel_error, rel);
        res.worst_param = store.name(p);
        res.worst_index = i;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace bae
