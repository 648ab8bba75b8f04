#include "doctest.h"

#include "corap/admission.hpp"
#include "corap/core.hpp"

using namespace corap;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> words) {
  return {words.begin(), words.end()};
}

Example example_with_steps(std::vector<std::string> steps) {
  Example ex;
  ex.id = "e";
  ex.query = "q";
  ex.reference_steps = std::move(steps);
  ex.reference_answer = "5";
  return ex;
}

GeneratedSequence candidate(std::vector<std::string> steps, std::string answer) {
  GeneratedSequence s;
  s.steps = std::move(steps);
  s.answer = std::move(answer);
  s.full_token_logprobs = {-1.0};
  s.answer_token_logprobs = {-0.1};
  return s;
}

}  // namespace

TEST_CASE("rouge_l hand-computed F-measure") {
  // LCS=2, P=2/3, R=1 -> F = 2*(2/3)*1 / (2/3 + 1) = 0.8
  CHECK(rouge_l(toks({"the", "cat", "sat"}), toks({"the", "cat"})) ==
        doctest::Approx(0.8).epsilon(1e-12));
  CHECK(rouge_l(toks({"a", "b", "c"}), toks({"a", "b", "c"})) ==
        doctest::Approx(1.0));
  CHECK(rouge_l(toks({"a", "b"}), toks({"c", "d"})) == doctest::Approx(0.0));
  CHECK(rouge_l({}, toks({"a"})) == doctest::Approx(0.0));
  CHECK(rouge_l(toks({"a"}), {}) == doctest::Approx(0.0));
}

TEST_CASE("rouge_l precision and recall swap when operands swap") {
  const auto ab = rouge_l_score(toks({"a", "x", "b"}), toks({"a", "b"}));
  const auto ba = rouge_l_score(toks({"a", "b"}), toks({"a", "x", "b"}));
  CHECK(ab.precision == doctest::Approx(ba.recall));
  CHECK(ab.recall == doctest::Approx(ba.precision));
  CHECK(ab.f == doctest::Approx(ba.f));
}

TEST_CASE("tokenize casefolds, splits on whitespace, strips edge punctuation") {
  const auto t = tokenize("  The CAT, sat. on_the (mat)!  ");
  REQUIRE(t.size() == 5);
  CHECK(t[0] == "the");
  CHECK(t[1] == "cat");
  CHECK(t[2] == "sat");
  CHECK(t[3] == "on_the");  // interior punctuation survives
  CHECK(t[4] == "mat");
  CHECK(tokenize("...").empty());
  CHECK(tokenize("").empty());
}

TEST_CASE("admit compares the full trace against the reference at 0.2") {
  AdmissionConfig cfg;
  Example ex = example_with_steps({"count the cubes", "add the spheres"});
  CHECK(admit(ex, candidate({"count the cubes", "add the spheres"}, "5"), cfg));
  CHECK_FALSE(admit(ex, candidate({"zz qq ww"}, "5"), cfg));
}

TEST_CASE("admission threshold is inclusive") {
  AdmissionConfig cfg;  // 0.2 default
  // Candidate of 9 tokens sharing exactly one with a 1-token reference:
  // P=1/9, R=1, F = 2/9 / (10/9) = 0.2 exactly.
  Example ex = example_with_steps({"key"});
  GeneratedSequence s = candidate(
      {"key f1 f2 f3 f4 f5 f6 f7 f8"}, "5");
  CHECK(rouge_l(tokenize(s.steps[0]), toks({"key"})) ==
        doctest::Approx(0.2).epsilon(1e-12));
  CHECK(admit(ex, s, cfg));
  // One more filler token pushes F below the threshold.
  GeneratedSequence below = candidate({"key f1 f2 f3 f4 f5 f6 f7 f8 f9"}, "5");
  CHECK_FALSE(admit(ex, below, cfg));
}

TEST_CASE("answer_match normalization modes") {
  AdmissionConfig cfg;
  cfg.answer_normalization = AnswerNormalization::exact;
  CHECK(answer_match("5", "5", cfg));
  CHECK_FALSE(answer_match("5 ", "5", cfg));

  cfg.answer_normalization = AnswerNormalization::casefold_trim;
  CHECK(answer_match(" Five ", "five", cfg));
  CHECK(answer_match("RED", "red", cfg));
  CHECK_FALSE(answer_match("blue", "red", cfg));

  cfg.answer_normalization = AnswerNormalization::numeric;
  CHECK(answer_match("5.0", "5", cfg));
  CHECK(answer_match(" 42 ", "42.000", cfg));
  CHECK_FALSE(answer_match("5", "6", cfg));
  // unparseable operands are a mismatch, not an error
  CHECK_FALSE(answer_match("five", "5", cfg));
  CHECK_FALSE(answer_match("5", "", cfg));
}

TEST_CASE("ra_loss requires one candidate that is admitted AND correct") {
  AdmissionConfig cfg;
  Example ex = example_with_steps({"count the cubes carefully"});
  GeneratedSequence good = candidate({"count the cubes carefully"}, "5");
  GeneratedSequence wrong_answer = candidate({"count the cubes carefully"}, "6");
  GeneratedSequence bad_trace = candidate({"zz qq ww ee"}, "5");

  std::vector<GeneratedSequence> set = {good};
  CHECK(ra_loss(ex, set, cfg) == 0);

  set = {};
  CHECK(ra_loss(ex, set, cfg) == 1);

  // One candidate matches the answer but fails admission; the other is
  // admitted with the wrong answer. Neither witnesses coverage.
  set = {bad_trace, wrong_answer};
  CHECK(ra_loss(ex, set, cfg) == 1);
}

TEST_CASE("ra_loss never increases when candidates are added") {
  AdmissionConfig cfg;
  Example ex = example_with_steps({"alpha beta gamma"});
  Rng rng = SeedTree(31).child("ra_mono", 0).stream();
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<GeneratedSequence> set;
    const int n = static_cast<int>(rng.next_below(5));
    auto random_candidate = [&]() {
      if (rng.bernoulli(0.4)) return candidate({"alpha beta gamma"}, "5");
      if (rng.bernoulli(0.5)) return candidate({"alpha beta gamma"}, "9");
      return candidate({"xx yy zz"}, "5");
    };
    for (int i = 0; i < n; ++i) set.push_back(random_candidate());
    const int before = ra_loss(ex, set, cfg);
    set.push_back(random_candidate());
    const int after = ra_loss(ex, set, cfg);
    CHECK(after <= before);
    CHECK((after == 0 || after == 1));
  }
}
