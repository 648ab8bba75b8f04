#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corap/core.hpp"

namespace corap {

// A sampled reasoning trace plus final answer. full_token_logprobs covers
// every token of the concatenated generation; answer_token_logprobs covers
// the answer tokens conditioned on the generated trace.
struct GeneratedSequence {
  std::vector<std::string> steps;
  std::string answer;
  std::vector<double> full_token_logprobs;
  std::vector<double> answer_token_logprobs;
  int sample_index = 1;

  bool operator==(const GeneratedSequence&) const = default;
};

struct SamplerConfig {
  double temperature = 1.2;
  double top_p = 0.85;
  int k_max = 16;
};

struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MalformedResponseError : BackendError {
  using BackendError::BackendError;
};

// Candidate generator. Implementations must be shareable across threads;
// per-call state lives in the arguments. Backends that cannot honor the
// provided seed stream must report reproducible() == false.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;

  virtual GeneratedSequence sample(const Example& example,
                                   const SamplerConfig& config,
                                   const SeedTree& stream, int k) = 0;
  virtual bool reproducible() const { return true; }
  virtual std::string model_tag() const = 0;
};

// One candidate. The per-candidate stream is derived inside, so candidate k
// depends only on (stream, k), never on sampling history.
GeneratedSequence sample_candidate(GenerationBackend& backend,
                                   const Example& example,
                                   const SamplerConfig& config,
                                   const SeedTree& stream, int k);

// The full candidate stream, sample_index 1..k_max in order. Materializing
// the pool lets one set of draws be replayed under every threshold tuple.
std::vector<GeneratedSequence> sample_pool(GenerationBackend& backend,
                                           const Example& example,
                                           const SamplerConfig& config,
                                           const SeedTree& stream);

// ---------------------------------------------------------------------------
// Simulated backend
// ---------------------------------------------------------------------------

// Scalar law for simulated quality scores.
struct ScoreDist {
  enum class Kind { point, uniform };
  Kind kind = Kind::point;
  double a = 0.0;  // point value, or lower bound
  double b = 0.0;  // upper bound (uniform)

  static ScoreDist point(double v) { return {Kind::point, v, v}; }
  static ScoreDist uniform(double lo, double hi) {
    return {Kind::uniform, lo, hi};
  }
  double draw(Rng& rng) const;
  bool is_point() const { return kind == Kind::point; }
};

// Per-example generation law: a candidate is "good" (admissible trace and
// correct answer) with probability p_correct; Q and A scores are drawn from
// the good/bad distributions. Q values must be <= 0, A values in (0, 1].
struct SimLaw {
  double p_correct = 0.5;
  ScoreDist good_q = ScoreDist::point(-1.0);
  ScoreDist bad_q = ScoreDist::point(-3.0);
  ScoreDist good_a = ScoreDist::point(0.9);
  ScoreDist bad_a = ScoreDist::point(0.2);
  int tokens_per_candidate = 8;
  int answer_tokens = 1;

  void validate() const;
  bool all_point() const {
    return good_q.is_point() && bad_q.is_point() && good_a.is_point() &&
           bad_a.is_point();
  }
};

struct SimProfile {
  SimLaw default_law;
  std::map<std::string, SimLaw> per_example;

  const SimLaw& law_for(const std::string& example_id) const;
  void validate() const;

  static SimProfile from_json_file(const std::string& path);
  static SimProfile from_json_string(const std::string& text);
  std::string to_json_string() const;
};

// Backend whose candidate stream follows the profile law exactly. Good
// candidates replay the reference trace and answer; bad candidates emit a
// trace with no token overlap and a mismatching answer, so admission and
// answer matching reproduce the declared joint law.
std::shared_ptr<GenerationBackend> simulated_backend(SimProfile profile);

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

// Wire protocol: POST {base_url}/generate with
//   {query, image_ref?, temperature, top_p, seed?, want_logprobs: true}
// expecting {steps: [string], answer: string, full_token_logprobs: [number],
// answer_token_logprobs: [number]}. When answer_token_logprobs is absent the
// client issues a second POST {base_url}/score with {query, image_ref?,
// steps, answer} expecting {answer_token_logprobs: [number]}.
struct RemoteConfig {
  std::string base_url;
  int timeout_seconds = 30;
  int retries = 2;
  bool honors_seed = false;
  std::string auth_token;  // sent as a bearer token when non-empty
  std::string model_tag = "remote";
};

std::shared_ptr<GenerationBackend> remote_backend(RemoteConfig config);

}  // namespace corap
