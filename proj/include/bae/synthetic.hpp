#pragma once

#include <cstddef>

#include "bae/advantage.hpp"
#include "bae/policy.hpp"
#include "bae/ppo.hpp"
#include "bae/rng.hpp"

namespace bae {

/// Random rewards, termination/truncation flags and value rows for estimator checks.
struct SyntheticSegment {
  Trajectory traj;
  ValueTable table;
};

/// Length uniform in [1, max_len]. Each step terminates or truncates with
/// probability p_done / 2 each. With identical_rows every row equals row 0;
/// otherwise rows are independent perturbations of it.
SyntheticSegment random_segment(Rng& rng, std::size_t max_len, std::size_t rows, bool identical_rows,
                                double p_done = 0.2);

/// Small network with N(0, scale^2) parameters and a random batch for the PPO
/// objective; used by gradient checks.
struct SyntheticLossProblem {
  ActorCritic net;
  LossBatch batch;
  PPOConfig cfg;
};

SyntheticLossProblem random_loss_problem(Rng& rng, std::size_t batch, bool discrete,
                                         double scale = 0.5);

}  // namespace bae
