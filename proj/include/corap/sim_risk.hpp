#pragma once

#include "corap/generation.hpp"
#include "corap/prediction_set.hpp"

namespace corap {

// Exact miscoverage risk of the selection loop under a point-mass simulated
// law: candidate types form a two-state chain with early stopping, so the
// state distribution can be propagated in closed form. Effective Q/A values
// go through the same floating-point pipeline as real candidates, keeping
// threshold comparisons bit-consistent with replay. Throws when the law has
// non-point score distributions.
double sim_true_risk(const SimLaw& law, const ThresholdTuple& lambda,
                     int k_max,
                     AnswerQualityMode mode = AnswerQualityMode::geometric_mean);

// Monte Carlo estimate of the same risk, drawn directly from the law. Works
// for any score distributions.
double sim_true_risk_mc(const SimLaw& law, const ThresholdTuple& lambda,
                        int k_max, AnswerQualityMode mode, int n_draws,
                        const SeedTree& stream);

}  // namespace corap
