#include "corap/generation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

namespace corap {

using nlohmann::json;

GeneratedSequence sample_candidate(GenerationBackend& backend,
                                   const Example& example,
                                   const SamplerConfig& config,
                                   const SeedTree& stream, int k) {
  if (k < 1 || k > config.k_max) {
    throw std::invalid_argument("sample_candidate: k out of range [1, k_max]");
  }
  GeneratedSequence seq =
      backend.sample(example, config, stream.child("candidate", k), k);
  seq.sample_index = k;
  if (seq.full_token_logprobs.empty()) {
    throw MalformedResponseError(
        "backend returned empty full_token_logprobs for example " +
        example.id);
  }
  if (seq.answer_token_logprobs.empty()) {
    throw MalformedResponseError(
        "backend returned empty answer_token_logprobs for example " +
        example.id);
  }
  return seq;
}

std::vector<GeneratedSequence> sample_pool(GenerationBackend& backend,
                                           const Example& example,
                                           const SamplerConfig& config,
                                           const SeedTree& stream) {
  std::vector<GeneratedSequence> pool;
  pool.reserve(config.k_max);
  for (int k = 1; k <= config.k_max; ++k) {
    try {
      pool.push_back(sample_candidate(backend, example, config, stream, k));
    } catch (const BackendError& e) {
      throw BackendError("sample_pool: candidate " + std::to_string(k) +
                         " failed: " + e.what());
    }
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Simulated backend
// ---------------------------------------------------------------------------

double ScoreDist::draw(Rng& rng) const {
  switch (kind) {
    case Kind::point:
      return a;
    case Kind::uniform:
      return rng.uniform(a, b);
  }
  return a;
}

void SimLaw::validate() const {
  if (p_correct < 0.0 || p_correct > 1.0) {
    throw std::invalid_argument("SimLaw: p_correct outside [0,1]");
  }
  auto check_q = [](const ScoreDist& d, const char* name) {
    if (d.a > 0.0 || d.b > 0.0) {
      throw std::invalid_argument(std::string("SimLaw: ") + name +
                                  " must be <= 0");
    }
    if (d.kind == ScoreDist::Kind::uniform && d.a > d.b) {
      throw std::invalid_argument(std::string("SimLaw: ") + name +
                                  " has inverted range");
    }
  };
  auto check_a = [](const ScoreDist& d, const char* name) {
    if (d.a <= 0.0 || d.a > 1.0 || d.b <= 0.0 || d.b > 1.0) {
      throw std::invalid_argument(std::string("SimLaw: ") + name +
                                  " must lie in (0,1]");
    }
    if (d.kind == ScoreDist::Kind::uniform && d.a > d.b) {
      throw std::invalid_argument(std::string("SimLaw: ") + name +
                                  " has inverted range");
    }
  };
  check_q(good_q, "good_q");
  check_q(bad_q, "bad_q");
  check_a(good_a, "good_a");
  check_a(bad_a, "bad_a");
  if (tokens_per_candidate < 1 || answer_tokens < 1) {
    throw std::invalid_argument("SimLaw: token counts must be positive");
  }
}

const SimLaw& SimProfile::law_for(const std::string& example_id) const {
  auto it = per_example.find(example_id);
  return it == per_example.end() ? default_law : it->second;
}

void SimProfile::validate() const {
  default_law.validate();
  for (const auto& [id, law] : per_example) law.validate();
}

namespace {

ScoreDist dist_from_json(const json& j, const char* name) {
  if (j.contains("point")) return ScoreDist::point(j.at("point").get<double>());
  if (j.contains("uniform")) {
    auto arr = j.at("uniform");
    return ScoreDist::uniform(arr.at(0).get<double>(), arr.at(1).get<double>());
  }
  throw std::invalid_argument(std::string("SimProfile: distribution ") + name +
                              " must have \"point\" or \"uniform\"");
}

json dist_to_json(const ScoreDist& d) {
  if (d.kind == ScoreDist::Kind::point) return json{{"point", d.a}};
  return json{{"uniform", {d.a, d.b}}};
}

SimLaw law_from_json(const json& j) {
  SimLaw law;
  if (j.contains("p_correct")) law.p_correct = j.at("p_correct").get<double>();
  if (j.contains("good_q")) law.good_q = dist_from_json(j.at("good_q"), "good_q");
  if (j.contains("bad_q")) law.bad_q = dist_from_json(j.at("bad_q"), "bad_q");
  if (j.contains("good_a")) law.good_a = dist_from_json(j.at("good_a"), "good_a");
  if (j.contains("bad_a")) law.bad_a = dist_from_json(j.at("bad_a"), "bad_a");
  if (j.contains("tokens_per_candidate")) {
    law.tokens_per_candidate = j.at("tokens_per_candidate").get<int>();
  }
  if (j.contains("answer_tokens")) {
    law.answer_tokens = j.at("answer_tokens").get<int>();
  }
  return law;
}

json law_to_json(const SimLaw& law) {
  return json{{"p_correct", law.p_correct},
              {"good_q", dist_to_json(law.good_q)},
              {"bad_q", dist_to_json(law.bad_q)},
              {"good_a", dist_to_json(law.good_a)},
              {"bad_a", dist_to_json(law.bad_a)},
              {"tokens_per_candidate", law.tokens_per_candidate},
              {"answer_tokens", law.answer_tokens}};
}

}  // namespace

SimProfile SimProfile::from_json_string(const std::string& text) {
  json j = json::parse(text);
  SimProfile profile;
  if (j.contains("default")) profile.default_law = law_from_json(j.at("default"));
  if (j.contains("per_example")) {
    for (auto& [id, law] : j.at("per_example").items()) {
      profile.per_example[id] = law_from_json(law);
    }
  }
  profile.validate();
  return profile;
}

SimProfile SimProfile::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open sim profile: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

std::string SimProfile::to_json_string() const {
  json j;
  j["schema"] = "corap.sim_profile.v1";
  j["default"] = law_to_json(default_law);
  json per = json::object();
  for (const auto& [id, law] : per_example) per[id] = law_to_json(law);
  j["per_example"] = per;
  return j.dump(2);
}

namespace {

// Tokens for bad traces, guaranteed disjoint from the reference so the
// admission LCS is zero.
std::vector<std::string> decoy_tokens(const Example& example, Rng& rng,
                                      int count) {
  std::set<std::string> forbidden;
  for (const auto& step : example.reference_steps) {
    std::istringstream words(step);
    std::string w;
    while (words >> w) forbidden.insert(w);
  }
  std::vector<std::string> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::string tok = "decoy" + std::to_string(rng.next_below(100000));
    while (forbidden.count(tok)) tok += "x";
    out.push_back(std::move(tok));
  }
  return out;
}

class SimulatedBackend final : public GenerationBackend {
 public:
  explicit SimulatedBackend(SimProfile profile) : profile_(std::move(profile)) {
    profile_.validate();
  }

  GeneratedSequence sample(const Example& example, const SamplerConfig&,
                           const SeedTree& stream, int k) override {
    const SimLaw& law = profile_.law_for(example.id);
    Rng rng = stream.stream();
    const bool good = rng.bernoulli(law.p_correct);
    const double q = (good ? law.good_q : law.bad_q).draw(rng);
    const double a = (good ? law.good_a : law.bad_a).draw(rng);

    GeneratedSequence seq;
    seq.sample_index = k;
    if (good) {
      if (example.reference_steps.empty()) {
        throw BackendError(
            "simulated backend: example " + example.id +
            " has no reference steps, good candidates cannot be admissible");
      }
      seq.steps = example.reference_steps;
      seq.answer = example.reference_answer;
    } else {
      auto toks = decoy_tokens(example, rng, 4);
      std::string trace;
      for (const auto& t : toks) {
        if (!trace.empty()) trace += ' ';
        trace += t;
      }
      seq.steps = {trace};
      seq.answer = example.reference_answer + "_wrong";
    }
    seq.full_token_logprobs.assign(law.tokens_per_candidate, q);
    seq.answer_token_logprobs.assign(law.answer_tokens, std::log(a));
    return seq;
  }

  std::string model_tag() const override { return "simulated"; }

 private:
  SimProfile profile_;
};

}  // namespace

std::shared_ptr<GenerationBackend> simulated_backend(SimProfile profile) {
  return std::make_shared<SimulatedBackend>(std::move(profile));
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

namespace {

class RemoteBackend final : public GenerationBackend {
 public:
  explicit RemoteBackend(RemoteConfig config) : cfg_(std::move(config)) {
    if (cfg_.base_url.empty()) {
      throw std::invalid_argument("remote backend: base_url required");
    }
  }

  GeneratedSequence sample(const Example& example, const SamplerConfig& config,
                           const SeedTree& stream, int k) override {
    json req;
    req["query"] = example.query;
    if (example.image_ref) req["image_ref"] = *example.image_ref;
    req["temperature"] = config.temperature;
    req["top_p"] = config.top_p;
    req["want_logprobs"] = true;
    if (cfg_.honors_seed) req["seed"] = stream.node_seed();

    json resp = post_json("/generate", req);
    GeneratedSequence seq;
    seq.sample_index = k;
    seq.steps = require_field<std::vector<std::string>>(resp, "steps");
    seq.answer = require_field<std::string>(resp, "answer");
    seq.full_token_logprobs =
        require_field<std::vector<double>>(resp, "full_token_logprobs");
    if (resp.contains("answer_token_logprobs") &&
        !resp.at("answer_token_logprobs").is_null()) {
      seq.answer_token_logprobs =
          resp.at("answer_token_logprobs").get<std::vector<double>>();
    } else {
      // Two-phase generate-then-score: ask the endpoint to score the answer
      // conditioned on the generated trace.
      json score_req;
      score_req["query"] = example.query;
      if (example.image_ref) score_req["image_ref"] = *example.image_ref;
      score_req["steps"] = seq.steps;
      score_req["answer"] = seq.answer;
      json score_resp = post_json("/score", score_req);
      seq.answer_token_logprobs =
          require_field<std::vector<double>>(score_resp, "answer_token_logprobs");
    }
    return seq;
  }

  bool reproducible() const override { return cfg_.honors_seed; }
  std::string model_tag() const override { return cfg_.model_tag; }

 private:
  template <typename T>
  static T require_field(const json& j, const char* name) {
    if (!j.contains(name) || j.at(name).is_null()) {
      throw MalformedResponseError(
          std::string("remote response missing field \"") + name + "\"");
    }
    try {
      return j.at(name).get<T>();
    } catch (const json::exception& e) {
      throw MalformedResponseError(std::string("remote response field \"") +
                                   name + "\" has wrong type: " + e.what());
    }
  }

  json post_json(const std::string& path, const json& body) {
    httplib::Client client(cfg_.base_url);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    if (!cfg_.auth_token.empty()) client.set_bearer_token_auth(cfg_.auth_token);

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      auto res = client.Post(path, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP status " + std::to_string(res->status);
        continue;
      }
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw MalformedResponseError(std::string("remote response is not JSON: ") +
                                     e.what());
      }
    }
    throw BackendError("remote backend " + cfg_.base_url + path +
                       " failed after " + std::to_string(cfg_.retries + 1) +
                       " attempts: " + last_error);
  }

  RemoteConfig cfg_;
};

}  // namespace

std::shared_ptr<GenerationBackend> remote_backend(RemoteConfig config) {
  return std::make_shared<RemoteBackend>(std::move(config));
}

}  // namespace corap
