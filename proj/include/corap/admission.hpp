#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corap/core.hpp"
#include "corap/generation.hpp"

namespace corap {

enum class AnswerNormalization { exact, casefold_trim, numeric };

std::string to_string(AnswerNormalization n);
AnswerNormalization answer_normalization_from_string(std::string_view s);

struct AdmissionConfig {
  double rouge_threshold = 0.2;  // inclusive
  AnswerNormalization answer_normalization = AnswerNormalization::casefold_trim;
};

// Casefolded whitespace tokenization with punctuation stripped at token
// edges. ASCII-only folding; multi-byte text passes through untouched.
std::vector<std::string> tokenize(std::string_view text);

struct RougeScore {
  int lcs = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

// LCS-based F-measure with equal precision/recall weighting. Zero when
// either side is empty or the LCS is empty.
RougeScore rouge_l_score(std::span<const std::string> candidate_tokens,
                         std::span<const std::string> reference_tokens);
double rouge_l(std::span<const std::string> candidate_tokens,
               std::span<const std::string> reference_tokens);

// Trace admission: ROUGE-L of the generated trace against the concatenated
// reference steps meets the threshold.
bool admit(const Example& example, const GeneratedSequence& seq,
           const AdmissionConfig& cfg);

// Equality under the configured normalization. In numeric mode an
// unparseable operand is a mismatch, not an error.
bool answer_match(std::string_view candidate, std::string_view reference,
                  const AdmissionConfig& cfg);

// Reasoning-answer miscoverage: 1 unless some candidate is both admitted and
// answer-matching. The empty set always loses.
int ra_loss(const Example& example,
            std::span<const GeneratedSequence> prediction_set,
            const AdmissionConfig& cfg);

}  // namespace corap
