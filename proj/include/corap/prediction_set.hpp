#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "corap/generation.hpp"
#include "corap/quality.hpp"

namespace corap {

// Threshold tuple: lambda1 filters individual candidates by sequence
// quality, lambda2 is the set-confidence floor, lambda3 the answer-quality
// floor. lambda1 and lambda2 may be +/-infinity sentinels; lambda3 lies in
// [0, 1].
struct ThresholdTuple {
  double lambda1 = -std::numeric_limits<double>::infinity();
  double lambda2 = -std::numeric_limits<double>::infinity();
  double lambda3 = 0.0;

  bool operator==(const ThresholdTuple&) const = default;
};

enum class StopReason { criteria_met, budget_exhausted };

std::string to_string(StopReason r);

struct PredictionSet {
  std::vector<GeneratedSequence> members;  // admission order
  int stopped_at = 0;                      // last sampled index
  StopReason stop_reason = StopReason::budget_exhausted;

  bool operator==(const PredictionSet&) const = default;
};

namespace detail {

// Shared control flow for live sampling and replay: candidates below
// lambda1 are skipped; after each admission the loop stops once the set
// confidence and the best candidate's answer quality clear their floors.
// Set confidence of the empty set is treated as -infinity, so the criteria
// can only be met after the first admission.
template <typename NextCandidate>
PredictionSet run_selection_loop(int k_max, const ThresholdTuple& lambda,
                                 AnswerQualityMode mode, NextCandidate next) {
  PredictionSet out;
  double best_q = -std::numeric_limits<double>::infinity();
  int best_pos = -1;
  for (int k = 1; k <= k_max; ++k) {
    GeneratedSequence seq = next(k);
    out.stopped_at = k;
    const double q = sequence_quality(seq);
    if (q < lambda.lambda1) continue;
    out.members.push_back(std::move(seq));
    if (q > best_q) {
      best_q = q;
      best_pos = static_cast<int>(out.members.size()) - 1;
    }
    if (best_q >= lambda.lambda2 &&
        answer_quality(out.members[best_pos], mode) >= lambda.lambda3) {
      out.stop_reason = StopReason::criteria_met;
      return out;
    }
  }
  out.stopped_at = k_max;
  out.stop_reason = StopReason::budget_exhausted;
  return out;
}

}  // namespace detail

// Adaptive construction against a live backend: samples sequentially and
// stops early once the termination criteria hold.
inline PredictionSet construct_set(
    GenerationBackend& backend, const Example& example,
    const ThresholdTuple& lambda, const SamplerConfig& config,
    const SeedTree& stream,
    AnswerQualityMode mode = AnswerQualityMode::geometric_mean) {
  if (config.k_max < 1) {
    throw std::invalid_argument("construct_set: k_max must be >= 1");
  }
  return detail::run_selection_loop(
      config.k_max, lambda, mode, [&](int k) {
        return sample_candidate(backend, example, config, stream, k);
      });
}

// Deterministic re-execution of the selection loop over a pre-sampled pool.
// Equals construct_set against a backend that would have emitted exactly
// this pool, which lets one pool serve every threshold tuple in a grid.
inline PredictionSet replay_set(
    std::span<const GeneratedSequence> pool, const ThresholdTuple& lambda,
    AnswerQualityMode mode = AnswerQualityMode::geometric_mean) {
  if (pool.empty()) {
    return PredictionSet{{}, 0, StopReason::budget_exhausted};
  }
  return detail::run_selection_loop(
      static_cast<int>(pool.size()), lambda, mode,
      [&](int k) { return pool[k - 1]; });
}

inline std::string to_string(StopReason r) {
  return r == StopReason::criteria_met ? "criteria_met" : "budget_exhausted";
}

}  // namespace corap
