#include "doctest.h"

#include <cmath>

#include "corap/admission.hpp"
#include "corap/generation.hpp"
#include "corap/prediction_set.hpp"
#include "corap/quality.hpp"
#include "corap/sim_risk.hpp"

using namespace corap;

namespace {

Example toy_example() {
  Example ex;
  ex.id = "e1";
  ex.query = "how many spheres";
  ex.reference_steps = {"count the spheres", "report the total"};
  ex.reference_answer = "5";
  return ex;
}

SimProfile point_profile(double p_correct) {
  SimProfile profile;
  profile.default_law.p_correct = p_correct;
  profile.default_law.good_q = ScoreDist::point(-1.0);
  profile.default_law.bad_q = ScoreDist::point(-3.0);
  profile.default_law.good_a = ScoreDist::point(0.9);
  profile.default_law.bad_a = ScoreDist::point(0.2);
  return profile;
}

}  // namespace

TEST_CASE("simulated backend is deterministic under a fixed stream") {
  auto backend = simulated_backend(point_profile(0.5));
  SamplerConfig cfg;
  SeedTree stream = SeedTree(42).child("example", 0);
  const Example ex = toy_example();
  GeneratedSequence a = sample_candidate(*backend, ex, cfg, stream, 1);
  GeneratedSequence b = sample_candidate(*backend, ex, cfg, stream, 1);
  CHECK(a == b);
  CHECK(a.sample_index == 1);
}

TEST_CASE("simulated backend emits the configured answer confidence") {
  // A good candidate with answer confidence 0.9 must carry logprob ln(0.9).
  SimProfile profile = point_profile(1.0);
  profile.default_law.answer_tokens = 1;
  auto backend = simulated_backend(profile);
  SamplerConfig cfg;
  GeneratedSequence seq = sample_candidate(
      *backend, toy_example(), cfg, SeedTree(1).child("example", 0), 1);
  CHECK(seq.answer == "5");
  REQUIRE(seq.answer_token_logprobs.size() == 1);
  CHECK(seq.answer_token_logprobs[0] ==
        doctest::Approx(-0.1053605).epsilon(1e-6));
  CHECK(answer_quality(seq) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("sample_pool returns k_max candidates in sampling order") {
  auto backend = simulated_backend(point_profile(0.5));
  SamplerConfig cfg;
  cfg.k_max = 16;
  auto pool = sample_pool(*backend, toy_example(), cfg,
                          SeedTree(7).child("example", 3));
  REQUIRE(pool.size() == 16);
  for (int i = 0; i < 16; ++i) CHECK(pool[i].sample_index == i + 1);

  cfg.k_max = 1;
  auto singleton = sample_pool(*backend, toy_example(), cfg,
                               SeedTree(7).child("example", 3));
  CHECK(singleton.size() == 1);
}

TEST_CASE("distinct per-example streams give distinct pools") {
  auto backend = simulated_backend(point_profile(0.5));
  SamplerConfig cfg;
  auto a = sample_pool(*backend, toy_example(), cfg,
                       SeedTree(7).child("example", 0));
  auto b = sample_pool(*backend, toy_example(), cfg,
                       SeedTree(7).child("example", 1));
  CHECK(a != b);
}

TEST_CASE("degenerate profiles behave as declared") {
  AdmissionConfig adm;
  const Example ex = toy_example();
  SamplerConfig cfg;
  cfg.k_max = 8;

  auto perfect = simulated_backend(point_profile(1.0));
  auto pool = sample_pool(*perfect, ex, cfg, SeedTree(5).child("example", 0));
  for (const auto& seq : pool) {
    CHECK(answer_match(seq.answer, ex.reference_answer, adm));
    CHECK(admit(ex, seq, adm));
  }

  auto hopeless = simulated_backend(point_profile(0.0));
  pool = sample_pool(*hopeless, ex, cfg, SeedTree(5).child("example", 0));
  CHECK(ra_loss(ex, pool, adm) == 1);
  for (const auto& seq : pool) {
    CHECK_FALSE(answer_match(seq.answer, ex.reference_answer, adm));
    CHECK_FALSE(admit(ex, seq, adm));
  }
}

TEST_CASE("profile validation rejects out-of-range parameters") {
  SimProfile bad = point_profile(1.5);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = point_profile(0.5);
  bad.default_law.good_q = ScoreDist::point(0.5);  // logprob must be <= 0
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = point_profile(0.5);
  bad.default_law.good_a = ScoreDist::point(0.0);  // confidence in (0,1]
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("empirical candidate statistics match the declared law") {
  const double p = 0.65;
  auto backend = simulated_backend(point_profile(p));
  SamplerConfig cfg;
  cfg.k_max = 1;
  AdmissionConfig adm;
  const Example ex = toy_example();
  const int draws = 20000;
  int good = 0;
  SeedTree root(99);
  for (int i = 0; i < draws; ++i) {
    GeneratedSequence seq =
        sample_candidate(*backend, ex, cfg, root.child("draw", i), 1);
    const bool correct = answer_match(seq.answer, ex.reference_answer, adm);
    const bool admitted = admit(ex, seq, adm);
    CHECK(correct == admitted);  // good candidates are both, bad are neither
    if (correct) ++good;
  }
  const double se = std::sqrt(p * (1 - p) / draws);
  CHECK(std::abs(static_cast<double>(good) / draws - p) <= 3 * se);
}

TEST_CASE("miscoverage over two kept candidates matches the closed form") {
  // With lambda1 = -inf everything enters the set and lambda2 = +inf keeps
  // the loop from stopping early, so the set holds both candidates and the
  // loss is p_bad^2 = 0.25.
  auto backend = simulated_backend(point_profile(0.5));
  SamplerConfig cfg;
  cfg.k_max = 2;
  AdmissionConfig adm;
  ThresholdTuple keep_all{-std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity(), 0.0};
  const Example ex = toy_example();
  const int draws = 10000;
  int losses = 0;
  SeedTree root(123);
  for (int i = 0; i < draws; ++i) {
    PredictionSet set = construct_set(*backend, ex, keep_all, cfg,
                                      root.child("example", i));
    CHECK(set.members.size() == 2);
    losses += ra_loss(ex, set.members, adm);
  }
  CHECK(std::abs(losses / static_cast<double>(draws) - 0.25) <= 0.02);
  CHECK(sim_true_risk(point_profile(0.5).default_law, keep_all, 2) ==
        doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("exact simulated risk agrees with direct Monte Carlo") {
  SimProfile profile = point_profile(0.7);
  ThresholdTuple lambda{-2.0, -1.5, 0.5};  // admit good only, stop on good
  const double exact = sim_true_risk(profile.default_law, lambda, 4);
  const double mc = sim_true_risk_mc(profile.default_law, lambda, 4,
                                     AnswerQualityMode::geometric_mean, 40000,
                                     SeedTree(17).child("mc", 0));
  // loss happens iff no good candidate among 4: 0.3^4 = 0.0081
  CHECK(exact == doctest::Approx(0.0081).epsilon(1e-9));
  CHECK(std::abs(mc - exact) < 0.005);
  SimLaw uniform_law;
  uniform_law.good_q = ScoreDist::uniform(-2, -1);
  CHECK_THROWS_AS(sim_true_risk(uniform_law, lambda, 4),
                  std::invalid_argument);
}

TEST_CASE("profile JSON round-trips") {
  SimProfile profile = point_profile(0.3);
  profile.default_law.good_q = ScoreDist::uniform(-1.5, -0.5);
  SimLaw special = profile.default_law;
  special.p_correct = 0.9;
  profile.per_example["e9"] = special;
  SimProfile back = SimProfile::from_json_string(profile.to_json_string());
  CHECK(back.default_law.p_correct == doctest::Approx(0.3));
  CHECK(back.default_law.good_q.kind == ScoreDist::Kind::uniform);
  CHECK(back.law_for("e9").p_correct == doctest::Approx(0.9));
  CHECK(back.law_for("other").p_correct == doctest::Approx(0.3));
}
