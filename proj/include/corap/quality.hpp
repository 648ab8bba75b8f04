#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "corap/generation.hpp"

namespace corap {

enum class AnswerQualityMode {
  geometric_mean,  // per-token geometric-mean probability (default)
  joint            // raw joint probability of the answer tokens
};

// Length-normalized log-likelihood of the full generation.
inline double sequence_quality(const GeneratedSequence& seq) {
  if (seq.full_token_logprobs.empty()) {
    throw std::invalid_argument("sequence_quality: empty logprob list");
  }
  double sum = 0.0;
  for (double lp : seq.full_token_logprobs) sum += lp;
  return sum / static_cast<double>(seq.full_token_logprobs.size());
}

// Model confidence in the answer conditioned on the generated trace. The
// geometric-mean form keeps thresholds comparable across answer lengths;
// joint mode returns the unnormalized product probability.
inline double answer_quality(
    const GeneratedSequence& seq,
    AnswerQualityMode mode = AnswerQualityMode::geometric_mean) {
  if (seq.answer_token_logprobs.empty()) {
    throw std::invalid_argument("answer_quality: empty answer logprob list");
  }
  double sum = 0.0;
  for (double lp : seq.answer_token_logprobs) sum += lp;
  if (mode == AnswerQualityMode::geometric_mean) {
    sum /= static_cast<double>(seq.answer_token_logprobs.size());
  }
  return std::exp(sum);
}

// Maximum sequence quality over the candidates.
inline double set_confidence(std::span<const GeneratedSequence> candidates) {
  if (candidates.empty()) {
    throw std::invalid_argument("set_confidence: empty candidate set");
  }
  double best = sequence_quality(candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    best = std::max(best, sequence_quality(candidates[i]));
  }
  return best;
}

// Candidate with maximal sequence quality; ties go to the earliest sample
// so replay is deterministic.
inline const GeneratedSequence& best_candidate(
    std::span<const GeneratedSequence> candidates) {
  if (candidates.empty()) {
    throw std::invalid_argument("best_candidate: empty candidate set");
  }
  const GeneratedSequence* best = &candidates[0];
  double best_q = sequence_quality(candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double q = sequence_quality(candidates[i]);
    if (q > best_q ||
        (q == best_q && candidates[i].sample_index < best->sample_index)) {
      best = &candidates[i];
      best_q = q;
    }
  }
  return *best;
}

}  // namespace corap
