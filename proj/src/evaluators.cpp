#include "corap/evaluators.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "corap/admission.hpp"
#include "corap/prediction_set.hpp"

namespace corap {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Synthetic games
// ---------------------------------------------------------------------------

SyntheticGame SyntheticGame::dictator(int n, int index) {
  SyntheticGame g;
  g.kind = Kind::dictator;
  g.n = n;
  g.dictator_index = index;
  return g;
}

SyntheticGame SyntheticGame::unanimity(int n) {
  SyntheticGame g;
  g.kind = Kind::unanimity;
  g.n = n;
  return g;
}

SyntheticGame SyntheticGame::additive(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("additive game: negative weight");
    total += w;
  }
  if (total > 1.0 + 1e-12) {
    throw std::invalid_argument("additive game: weights must sum to <= 1");
  }
  SyntheticGame g;
  g.kind = Kind::additive;
  g.n = static_cast<int>(weights.size());
  g.weights = std::move(weights);
  return g;
}

SyntheticGame SyntheticGame::threshold(std::vector<double> weights,
                                       double quota) {
  SyntheticGame g;
  g.kind = Kind::threshold;
  g.n = static_cast<int>(weights.size());
  g.weights = std::move(weights);
  g.quota = quota;
  return g;
}

SyntheticGame SyntheticGame::planted_subset(int n, std::vector<int> members) {
  SyntheticGame g;
  g.kind = Kind::planted_subset;
  g.n = n;
  g.planted = std::move(members);
  return g;
}

PlayerUniverse SyntheticGame::universe() const {
  PlayerUniverse u;
  u.kind = PlayerUniverse::Kind::example;
  for (int i = 0; i < n; ++i) {
    // Zero-padded so id order equals index order.
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%03d", i);
    u.players.push_back({buf, -1});
  }
  return u;
}

ValueFn SyntheticGame::fn() const {
  const SyntheticGame g = *this;
  auto index_of = [](const PlayerId& p) {
    return std::stoi(p.example_id.substr(1));
  };
  switch (kind) {
    case Kind::dictator:
      return [g, index_of](std::span<const PlayerId> s) {
        for (const auto& p : s) {
          if (index_of(p) == g.dictator_index) return 1.0;
        }
        return 0.0;
      };
    case Kind::unanimity:
      return [g](std::span<const PlayerId> s) {
        return s.size() == static_cast<std::size_t>(g.n) ? 1.0 : 0.0;
      };
    case Kind::additive:
      return [g, index_of](std::span<const PlayerId> s) {
        double v = 0.0;
        for (const auto& p : s) v += g.weights[index_of(p)];
        return v;
      };
    case Kind::threshold:
      return [g, index_of](std::span<const PlayerId> s) {
        double v = 0.0;
        for (const auto& p : s) v += g.weights[index_of(p)];
        return v >= g.quota ? 1.0 : 0.0;
      };
    case Kind::planted_subset:
      return [g, index_of](std::span<const PlayerId> s) {
        std::set<int> present;
        for (const auto& p : s) present.insert(index_of(p));
        for (int m : g.planted) {
          if (!present.count(m)) return 0.0;
        }
        return 1.0;
      };
  }
  throw std::logic_error("unreachable");
}

std::vector<double> SyntheticGame::exact_values() const {
  std::vector<double> phi(n, 0.0);
  switch (kind) {
    case Kind::dictator:
      phi[dictator_index] = 1.0;
      return phi;
    case Kind::unanimity:
      std::fill(phi.begin(), phi.end(), 1.0 / n);
      return phi;
    case Kind::additive:
      return weights;
    case Kind::planted_subset:
      for (int m : planted) phi[m] = 1.0 / static_cast<double>(planted.size());
      return phi;
    case Kind::threshold:
      return exact_shapley(fn(), universe());
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// Memoization
// ---------------------------------------------------------------------------

namespace {

std::string canonical_key(std::span<const PlayerId> coalition) {
  std::vector<PlayerId> sorted(coalition.begin(), coalition.end());
  std::sort(sorted.begin(), sorted.end());
  std::string key;
  for (const auto& p : sorted) {
    key += std::to_string(p.example_id.size());
    key += ':';
    key += p.example_id;
    key += '#';
    key += std::to_string(p.step_index);
    key += ';';
  }
  return key;
}

struct MemoState {
  std::unordered_map<std::string, double> cache;
  std::mutex mu;
  ValueFn inner;
};

}  // namespace

ValueFn memoized(ValueFn inner) {
  auto state = std::make_shared<MemoState>();
  state->inner = std::move(inner);
  return [state](std::span<const PlayerId> coalition) {
    const std::string key = canonical_key(coalition);
    {
      std::lock_guard<std::mutex> lock(state->mu);
      auto it = state->cache.find(key);
      if (it != state->cache.end()) return it->second;
    }
    const double value = state->inner(coalition);
    std::lock_guard<std::mutex> lock(state->mu);
    state->cache.emplace(key, value);
    return value;
  };
}

// ---------------------------------------------------------------------------
// Toy retrainable evaluator
// ---------------------------------------------------------------------------

ToyRetrainEvaluator::ToyRetrainEvaluator(Dataset training, Dataset calibration,
                                         Example target,
                                         CalibrationConfig base_config,
                                         ToyScorerParams params,
                                         SeedTree stream)
    : training_(std::move(training)),
      calibration_(std::move(calibration)),
      target_(std::move(target)),
      base_config_(std::move(base_config)),
      params_(std::move(params)),
      stream_(std::move(stream)) {
  if (training_.examples.empty()) {
    throw std::invalid_argument("ToyRetrainEvaluator: empty training set");
  }
  if (calibration_.examples.empty()) {
    throw std::invalid_argument("ToyRetrainEvaluator: empty calibration set");
  }
}

namespace {

std::vector<std::string> skill_tokens(const std::string& text,
                                      const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& tok : tokenize(text)) {
    if (tok.rfind(prefix, 0) == 0) out.push_back(tok);
  }
  return out;
}

}  // namespace

double ToyRetrainEvaluator::run_pipeline(const std::vector<std::string>& skills,
                                         std::uint64_t coalition_key) const {
  std::set<std::string> known(skills.begin(), skills.end());
  auto p_correct_for = [&](const Example& ex) {
    const auto required = skill_tokens(ex.query, params_.skill_prefix);
    if (required.empty()) return params_.p_easy;
    for (const auto& skill : required) {
      if (!known.count(skill)) return params_.p_unskilled;
    }
    return params_.p_skilled;
  };

  SimProfile profile;
  profile.default_law = params_.law_template;
  for (const auto& ex : calibration_.examples) {
    SimLaw law = params_.law_template;
    law.p_correct = p_correct_for(ex);
    profile.per_example[ex.id] = law;
  }
  {
    SimLaw law = params_.law_template;
    law.p_correct = p_correct_for(target_);
    profile.per_example[target_.id] = law;
  }
  auto backend = simulated_backend(std::move(profile));

  const SeedTree coalition_stream = stream_.child("coalition", coalition_key);
  CalibrationOutcome outcome = calibrate(*backend, calibration_, base_config_,
                                         coalition_stream.child("calibrate", 0));
  if (outcome.abstained) return 0.0;  // no certified configuration, no coverage
  PredictionSet set = construct_set(
      *backend, target_, *outcome.chosen, base_config_.sampler,
      coalition_stream.child("target", 0), base_config_.answer_quality_mode);
  return 1.0 - ra_loss(target_, set.members, base_config_.admission);
}

double ToyRetrainEvaluator::evaluate_example_coalition(
    std::span<const PlayerId> coalition) const {
  std::vector<std::string> skills;
  for (const auto& p : coalition) {
    const Example* ex = training_.find(p.example_id);
    if (!ex) {
      throw std::invalid_argument("unknown training example id: " +
                                  p.example_id);
    }
    for (const auto& step : ex->reference_steps) {
      for (auto& s : skill_tokens(step, params_.skill_prefix)) {
        skills.push_back(std::move(s));
      }
    }
  }
  const std::uint64_t key = fnv1a64("ex|" + canonical_key(coalition));
  return run_pipeline(skills, key);
}

double ToyRetrainEvaluator::evaluate_step_coalition(
    std::span<const PlayerId> coalition) const {
  std::vector<std::string> skills;
  for (const auto& p : coalition) {
    const Example* ex = training_.find(p.example_id);
    if (!ex) {
      throw std::invalid_argument("unknown training example id: " +
                                  p.example_id);
    }
    if (p.step_index < 0 ||
        p.step_index >= static_cast<int>(ex->reference_steps.size())) {
      throw std::invalid_argument("dangling step reference: " + p.display());
    }
    for (auto& s : skill_tokens(ex->reference_steps[p.step_index],
                                params_.skill_prefix)) {
      skills.push_back(std::move(s));
    }
  }
  const std::uint64_t key = fnv1a64("st|" + canonical_key(coalition));
  return run_pipeline(skills, key);
}

ValueFn ToyRetrainEvaluator::example_fn() const {
  auto self = *this;
  return [self](std::span<const PlayerId> coalition) {
    return self.evaluate_example_coalition(coalition);
  };
}

ValueFn ToyRetrainEvaluator::step_fn() const {
  auto self = *this;
  return [self](std::span<const PlayerId> coalition) {
    return self.evaluate_step_coalition(coalition);
  };
}

// ---------------------------------------------------------------------------
// Planted corpus
// ---------------------------------------------------------------------------

Dataset PlantedCorpus::training() const {
  Dataset ds;
  ds.role = DatasetRole::training;
  for (int i = 0; i < n_examples; ++i) {
    Example ex;
    ex.id = "e" + std::to_string(i);
    ex.query = "training exercise " + std::to_string(i);
    ex.reference_answer = "ok";
    for (int s = 0; s < steps_per_example; ++s) {
      std::string text = "routine pass " + std::to_string(i) + " stage " +
                         std::to_string(s);
      if (ex.id == pivotal_example && s == pivotal_step) {
        text = "apply " + skill_token + " to combine the counts";
      }
      ex.reference_steps.push_back(text);
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset PlantedCorpus::calibration() const {
  Dataset ds;
  ds.role = DatasetRole::calibration;
  for (int i = 0; i < n_cal; ++i) {
    Example ex;
    ex.id = "c" + std::to_string(i);
    ex.query = "count the shapes in view";
    ex.reference_steps = {"count each shape", "add the totals"};
    ex.reference_answer = "7";
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Example PlantedCorpus::target() const {
  Example ex;
  ex.id = "t0";
  ex.query = "combine the counts using " + skill_token;
  ex.reference_steps = {"check the object counts",
                        "combine them into one total"};
  ex.reference_answer = "42";
  return ex;
}

CalibrationConfig PlantedCorpus::base_config() const {
  CalibrationConfig cfg;
  cfg.alpha = 0.3;
  cfg.epsilon = 0.2;
  cfg.grid.explicit_tuples.clear();
  cfg.grid.lambda1_values = {-4.0, -2.0};
  cfg.grid.lambda2_values = {-3.5, -1.5};
  cfg.grid.lambda3_values = {0.1, 0.95};
  cfg.sampler.k_max = 8;
  return cfg;
}

PlantedCorpus PlantedCorpus::load_string(const std::string& text) {
  json j = json::parse(text);
  if (j.at("schema").get<std::string>() != "corap.planted.v1") {
    throw std::invalid_argument("unsupported planted corpus schema");
  }
  PlantedCorpus c;
  c.name = j.value("name", "");
  c.n_examples = j.at("n_examples").get<int>();
  c.steps_per_example = j.at("steps_per_example").get<int>();
  c.pivotal_example = j.at("pivotal_example").get<std::string>();
  c.pivotal_step = j.at("pivotal_step").get<int>();
  c.skill_token = j.at("skill_token").get<std::string>();
  if (j.contains("n_cal")) c.n_cal = j.at("n_cal").get<int>();
  for (auto& [id, v] : j.at("expected_example_shapley").items()) {
    c.expected_example_shapley[id] = v.get<double>();
  }
  for (const auto& e : j.at("expected_step_shapley")) {
    c.expected_step_shapley.emplace_back(
        PlayerId{e.at("example_id").get<std::string>(),
                 e.at("step_index").get<int>()},
        e.at("value").get<double>());
  }
  if (j.contains("scorer")) {
    const auto& s = j.at("scorer");
    c.scorer.p_skilled = s.value("p_skilled", c.scorer.p_skilled);
    c.scorer.p_unskilled = s.value("p_unskilled", c.scorer.p_unskilled);
    c.scorer.p_easy = s.value("p_easy", c.scorer.p_easy);
    c.scorer.skill_prefix = s.value("skill_prefix", c.scorer.skill_prefix);
  }
  return c;
}

PlantedCorpus PlantedCorpus::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open planted corpus: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_string(buf.str());
}

std::string PlantedCorpus::to_json_string() const {
  json j;
  j["schema"] = "corap.planted.v1";
  j["name"] = name;
  j["n_examples"] = n_examples;
  j["steps_per_example"] = steps_per_example;
  j["pivotal_example"] = pivotal_example;
  j["pivotal_step"] = pivotal_step;
  j["skill_token"] = skill_token;
  j["n_cal"] = n_cal;
  json expected = json::object();
  for (const auto& [id, v] : expected_example_shapley) expected[id] = v;
  j["expected_example_shapley"] = expected;
  json steps = json::array();
  for (const auto& [p, v] : expected_step_shapley) {
    steps.push_back(json{{"example_id", p.example_id},
                         {"step_index", p.step_index},
                         {"value", v}});
  }
  j["expected_step_shapley"] = steps;
  j["scorer"] = json{{"p_skilled", scorer.p_skilled},
                     {"p_unskilled", scorer.p_unskilled},
                     {"p_easy", scorer.p_easy},
                     {"skill_prefix", scorer.skill_prefix}};
  return j.dump(2);
}

}  // namespace corap
