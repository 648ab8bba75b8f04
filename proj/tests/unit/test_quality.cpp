#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "corap/core.hpp"
#include "corap/quality.hpp"

using namespace corap;

namespace {

GeneratedSequence seq_with(std::vector<double> full, std::vector<double> answer,
                           int k = 1) {
  GeneratedSequence s;
  s.steps = {"step"};
  s.answer = "a";
  s.full_token_logprobs = std::move(full);
  s.answer_token_logprobs = std::move(answer);
  s.sample_index = k;
  return s;
}

}  // namespace

TEST_CASE("sequence_quality is the arithmetic mean of token logprobs") {
  CHECK(sequence_quality(seq_with({-0.5, -1.5}, {0})) == doctest::Approx(-1.0));
  CHECK(sequence_quality(seq_with({-2.0}, {0})) == doctest::Approx(-2.0));
  CHECK(sequence_quality(seq_with({-1, -2, -3}, {0})) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(sequence_quality(seq_with({}, {0})), std::invalid_argument);
}

TEST_CASE("set_confidence is the maximum sequence quality") {
  std::vector<GeneratedSequence> c = {seq_with({-1.0}, {0}, 1),
                                      seq_with({-2.0}, {0}, 2)};
  CHECK(set_confidence(c) == doctest::Approx(-1.0));
  c = {seq_with({-0.3}, {0}, 1)};
  CHECK(set_confidence(c) == doctest::Approx(-0.3));
  c = {seq_with({-5.0}, {0}, 1), seq_with({-5.0}, {0}, 2)};
  CHECK(set_confidence(c) == doctest::Approx(-5.0));
  CHECK_THROWS_AS(set_confidence(std::vector<GeneratedSequence>{}),
                  std::invalid_argument);
}

TEST_CASE("answer_quality is the per-token geometric mean probability") {
  // exp(ln 0.9) recovers 0.9; the logprob constant comes from evaluating
  // ln(0.9) at double precision.
  CHECK(answer_quality(seq_with({0}, {-0.10536051565782630})) ==
        doctest::Approx(0.9).epsilon(1e-6));
  CHECK(answer_quality(seq_with({0}, {0.0})) == doctest::Approx(1.0));
  const double ln2 = std::log(2.0);
  CHECK(answer_quality(seq_with({0}, {-ln2, -ln2})) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(answer_quality(seq_with({0}, {})), std::invalid_argument);
}

TEST_CASE("answer_quality joint mode multiplies probabilities") {
  const double ln2 = std::log(2.0);
  CHECK(answer_quality(seq_with({0}, {-ln2, -ln2}), AnswerQualityMode::joint) ==
        doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("best_candidate takes the arg-max with earliest-sample ties") {
  std::vector<GeneratedSequence> c = {seq_with({-2.0}, {0}, 1),
                                      seq_with({-1.0}, {0}, 2)};
  CHECK(best_candidate(c).sample_index == 2);
  c = {seq_with({-1.0}, {0}, 1), seq_with({-1.0}, {0}, 2)};
  CHECK(best_candidate(c).sample_index == 1);
  c = {seq_with({-4.0}, {0}, 3)};
  CHECK(best_candidate(c).sample_index == 3);
}

TEST_CASE("best_candidate of a tie-free list is permutation invariant") {
  Rng rng = SeedTree(21).child("perm_check", 0).stream();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GeneratedSequence> c;
    for (int k = 1; k <= 6; ++k) {
      // distinct Q values by construction
      c.push_back(seq_with({-1.0 - 0.13 * k}, {-0.2}, k));
    }
    const int expected = best_candidate(c).sample_index;
    for (int i = 5; i > 0; --i) {
      std::swap(c[i], c[rng.next_below(i + 1)]);
    }
    CHECK(best_candidate(c).sample_index == expected);
  }
}

TEST_CASE("monotonicity: adding a candidate never decreases set confidence") {
  Rng rng = SeedTree(22).child("mono", 0).stream();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GeneratedSequence> c;
    const int n = 1 + static_cast<int>(rng.next_below(6));
    for (int k = 1; k <= n; ++k) {
      c.push_back(seq_with({rng.uniform(-6.0, 0.0)}, {-0.5}, k));
    }
    const double before = set_confidence(c);
    c.push_back(seq_with({rng.uniform(-6.0, 0.0)}, {-0.5}, n + 1));
    CHECK(set_confidence(c) >= before);
  }
}

TEST_CASE("scaling token logprobs by c scales Q by c and maps A to A^c") {
  GeneratedSequence s = seq_with({-0.4, -0.8, -1.2}, {-0.3, -0.7});
  const double c = 1.7;
  GeneratedSequence scaled = s;
  for (double& lp : scaled.full_token_logprobs) lp *= c;
  for (double& lp : scaled.answer_token_logprobs) lp *= c;
  CHECK(sequence_quality(scaled) ==
        doctest::Approx(c * sequence_quality(s)).epsilon(1e-12));
  CHECK(answer_quality(scaled) ==
        doctest::Approx(std::pow(answer_quality(s), c)).epsilon(1e-12));
}
