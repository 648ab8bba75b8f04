#include "corap/sim_risk.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace corap {

namespace {

struct EffectiveScores {
  double q_good, q_bad, a_good, a_bad;
};

// Push point values through the same mean/exp pipeline candidates use, so
// knife-edge threshold comparisons agree with replay bit for bit.
double effective_q(double q, int tokens) {
  GeneratedSequence seq;
  seq.full_token_logprobs.assign(tokens, q);
  seq.answer_token_logprobs.assign(1, 0.0);
  return sequence_quality(seq);
}

double effective_a(double a, int answer_tokens, AnswerQualityMode mode) {
  GeneratedSequence seq;
  seq.full_token_logprobs.assign(1, 0.0);
  seq.answer_token_logprobs.assign(answer_tokens, std::log(a));
  return answer_quality(seq, mode);
}

// Set state: which type currently holds the arg-max Q slot, and whether any
// good candidate has been admitted.
enum BestType { kNone = 0, kGood = 1, kBad = 2 };

struct ChainState {
  int best = kNone;
  bool has_good = false;

  int index() const { return best * 2 + (has_good ? 1 : 0); }
};

}  // namespace

double sim_true_risk(const SimLaw& law, const ThresholdTuple& lambda,
                     int k_max, AnswerQualityMode mode) {
  if (!law.all_point()) {
    throw std::invalid_argument(
        "sim_true_risk: exact risk needs point-mass score distributions");
  }
  law.validate();
  const double qg = effective_q(law.good_q.a, law.tokens_per_candidate);
  const double qb = effective_q(law.bad_q.a, law.tokens_per_candidate);
  const double ag = effective_a(law.good_a.a, law.answer_tokens, mode);
  const double ab = effective_a(law.bad_a.a, law.answer_tokens, mode);
  const double p = law.p_correct;

  auto type_q = [&](int t) { return t == kGood ? qg : qb; };
  auto type_a = [&](int t) { return t == kGood ? ag : ab; };
  auto stops = [&](const ChainState& s) {
    return s.best != kNone && type_q(s.best) >= lambda.lambda2 &&
           type_a(s.best) >= lambda.lambda3;
  };

  // Probability mass per live state, indexed by ChainState::index().
  std::array<double, 6> mass{};
  mass[ChainState{}.index()] = 1.0;
  double stopped_loss = 0.0;  // mass that stopped early and lost
  // (mass that stopped early with a good member contributes zero loss)

  for (int k = 0; k < k_max; ++k) {
    std::array<double, 6> next{};
    for (int best = kNone; best <= kBad; ++best) {
      for (int hg = 0; hg <= 1; ++hg) {
        ChainState s{best, hg == 1};
        const double m = mass[s.index()];
        if (m == 0.0) continue;
        for (int type : {kGood, kBad}) {
          const double w = m * (type == kGood ? p : 1.0 - p);
          if (w == 0.0) continue;
          ChainState t = s;
          if (type_q(type) >= lambda.lambda1) {  // admitted
            if (type == kGood) t.has_good = true;
            if (t.best == kNone || type_q(type) > type_q(t.best)) t.best = type;
            if (stops(t)) {  // termination is only checked after an admission
              if (!t.has_good) stopped_loss += w;
              continue;
            }
          }
          next[t.index()] += w;
        }
      }
    }
    mass = next;
  }
  double risk = stopped_loss;
  for (int best = kNone; best <= kBad; ++best) {
    for (int hg = 0; hg <= 1; ++hg) {
      ChainState s{best, hg == 1};
      if (!s.has_good) risk += mass[s.index()];
    }
  }
  return risk;
}

double sim_true_risk_mc(const SimLaw& law, const ThresholdTuple& lambda,
                        int k_max, AnswerQualityMode mode, int n_draws,
                        const SeedTree& stream) {
  law.validate();
  if (n_draws < 1) throw std::invalid_argument("sim_true_risk_mc: n_draws");
  long losses = 0;
  for (int d = 0; d < n_draws; ++d) {
    Rng rng = stream.child("draw", d).stream();
    bool has_good = false;
    double best_q = 0.0, best_a = 0.0;
    bool any = false;
    bool stopped = false;
    for (int k = 1; k <= k_max && !stopped; ++k) {
      const bool good = rng.bernoulli(law.p_correct);
      const double q_raw = (good ? law.good_q : law.bad_q).draw(rng);
      const double a_raw = (good ? law.good_a : law.bad_a).draw(rng);
      const double q = effective_q(q_raw, law.tokens_per_candidate);
      const double a = effective_a(a_raw, law.answer_tokens, mode);
      if (q < lambda.lambda1) continue;
      if (good) has_good = true;
      if (!any || q > best_q) {
        best_q = q;
        best_a = a;
        any = true;
      }
      if (any && best_q >= lambda.lambda2 && best_a >= lambda.lambda3) {
        stopped = true;
      }
    }
    if (!has_good) ++losses;
  }
  return static_cast<double>(losses) / static_cast<double>(n_draws);
}

}  // namespace corap
