#include <cmath>
#include <cstdio>
#include <ostream>

#include "bae/gradcheck.hpp"
#include "bae/harness.hpp"
#include "bae/synthetic.hpp"

namespace bae {

namespace {

void report(std::ostream& out, bool ok, const char* name, const std::string& detail, bool& all) {
  out << (ok ? "[pass] " : "[FAIL] ") << name << ": " << detail << "\n";
  all = all && ok;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

}  // namespace

bool selftest(std::ostream& out) {
  bool all = true;
  Rng rng(20240601);

  {
    double worst = 0.0;
    for (bool discrete : {true, false}) {
      SyntheticLossProblem p = random_loss_problem(rng, 8, discrete);
      LossBuilder loss = [&](ad::Graph& g, ParamStore&) {
        return ppo_loss(g, p.net, p.batch, p.cfg).total;
      };
      worst = std::max(worst, finite_diff_check(loss, p.net.params()).max_rel_error);
    }
    report(out, worst < 1e-5, "ppo loss gradient", "max rel err " + sci(worst), all);
  }

  {
    AdvantageConfig gae_cfg, bae_cfg;
    bae_cfg.method = AdvMethod::kBae;
    bae_cfg.m = 2;
    std::size_t mismatches = 0;
    for (int i = 0; i < 100; ++i) {
      const SyntheticSegment s = random_segment(rng, 32, 3, true);
      if (bae(s.table, s.traj, bae_cfg).advantages != gae(s.table.row(0), s.traj, gae_cfg).advantages)
        ++mismatches;
    }
    report(out, mismatches == 0, "bae reduces to gae", std::to_string(mismatches) + "/100 mismatches", all);
  }

  {
    double worst = 0.0;
    const double lambdas[] = {0.0, 0.37, 0.95, 1.0};
    const double gammas[] = {0.5, 0.9, 0.99, 1.0};
    for (int i = 0; i < 100; ++i) {
      AdvantageConfig cfg;
      cfg.method = AdvMethod::kBae;
      cfg.m = 2;
      cfg.lambda = lambdas[i % 4];
      cfg.gamma = gammas[(i / 4) % 4];
      const SyntheticSegment s = random_segment(rng, 12, 3, false);
      const auto rec = bae(s.table, s.traj, cfg).advantages;
      const auto lit = literal_bae_oracle(s.table, s.traj, cfg);
      for (std::size_t t = 0; t < rec.size(); ++t) worst = std::max(worst, std::abs(rec[t] - lit[t]));
    }
    report(out, worst < 1e-9, "bae matches literal sum", "max abs err " + sci(worst), all);
  }

  {
    ChainMDP chain(5);
    const TabularPolicy pi(5, {0.3, 0.7});
    const auto v = exact_values(chain, pi, 0.9);
    const double res = bellman_residual(chain, pi, 0.9, v);
    report(out, res < 1e-10, "chain value iteration", "bellman residual " + sci(res), all);
  }
  return all;
}

}  // namespace bae
