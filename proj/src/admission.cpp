#include "corap/admission.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace corap {

std::string to_string(AnswerNormalization n) {
  switch (n) {
    case AnswerNormalization::exact:
      return "exact";
    case AnswerNormalization::casefold_trim:
      return "casefold_trim";
    case AnswerNormalization::numeric:
      return "numeric";
  }
  return "unknown";
}

AnswerNormalization answer_normalization_from_string(std::string_view s) {
  if (s == "exact") return AnswerNormalization::exact;
  if (s == "casefold_trim") return AnswerNormalization::casefold_trim;
  if (s == "numeric") return AnswerNormalization::numeric;
  throw std::invalid_argument("unknown answer normalization: " +
                              std::string(s));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() &&
           std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    std::size_t start = i;
    while (i < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    if (i == start) break;
    std::size_t lo = start, hi = i;
    while (lo < hi && std::ispunct(static_cast<unsigned char>(text[lo]))) ++lo;
    while (hi > lo && std::ispunct(static_cast<unsigned char>(text[hi - 1]))) {
      --hi;
    }
    if (lo == hi) continue;
    std::string tok(text.substr(lo, hi - lo));
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

RougeScore rouge_l_score(std::span<const std::string> candidate_tokens,
                         std::span<const std::string> reference_tokens) {
  RougeScore score;
  const std::size_t m = candidate_tokens.size();
  const std::size_t n = reference_tokens.size();
  if (m == 0 || n == 0) return score;

  // Two-row LCS table.
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (candidate_tokens[i - 1] == reference_tokens[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  score.lcs = prev[n];
  if (score.lcs == 0) return score;
  score.precision = static_cast<double>(score.lcs) / static_cast<double>(m);
  score.recall = static_cast<double>(score.lcs) / static_cast<double>(n);
  // 2PR/(P+R) reduced to one division so exact fractions stay exact at
  // admission boundaries.
  score.f = 2.0 * static_cast<double>(score.lcs) / static_cast<double>(m + n);
  return score;
}

double rouge_l(std::span<const std::string> candidate_tokens,
               std::span<const std::string> reference_tokens) {
  return rouge_l_score(candidate_tokens, reference_tokens).f;
}

namespace {

std::string join(std::span<const std::string> parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::string casefold(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

bool parse_decimal(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

bool admit(const Example& example, const GeneratedSequence& seq,
           const AdmissionConfig& cfg) {
  const auto cand = tokenize(join(seq.steps));
  const auto ref = tokenize(join(example.reference_steps));
  return rouge_l(cand, ref) >= cfg.rouge_threshold;
}

bool answer_match(std::string_view candidate, std::string_view reference,
                  const AdmissionConfig& cfg) {
  switch (cfg.answer_normalization) {
    case AnswerNormalization::exact:
      return candidate == reference;
    case AnswerNormalization::casefold_trim:
      return casefold(trim(candidate)) == casefold(trim(reference));
    case AnswerNormalization::numeric: {
      double a = 0.0, b = 0.0;
      if (!parse_decimal(candidate, a) || !parse_decimal(reference, b)) {
        return false;
      }
      return a == b;
    }
  }
  return false;
}

int ra_loss(const Example& example,
            std::span<const GeneratedSequence> prediction_set,
            const AdmissionConfig& cfg) {
  for (const auto& seq : prediction_set) {
    if (answer_match(seq.answer, example.reference_answer, cfg) &&
        admit(example, seq, cfg)) {
      return 0;
    }
  }
  return 1;
}

}  // namespace corap
