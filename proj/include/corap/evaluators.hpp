#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "corap/attribution.hpp"
#include "corap/calibration.hpp"
#include "corap/core.hpp"
#include "corap/generation.hpp"

namespace corap {

// ---------------------------------------------------------------------------
// Synthetic games with known Shapley values (test oracles)
// ---------------------------------------------------------------------------

struct SyntheticGame {
  enum class Kind { dictator, unanimity, additive, threshold, planted_subset };

  Kind kind = Kind::dictator;
  int n = 3;
  int dictator_index = 0;
  std::vector<double> weights;  // additive / threshold
  double quota = 0.0;           // threshold
  std::vector<int> planted;     // planted_subset member indices

  static SyntheticGame dictator(int n, int index);
  static SyntheticGame unanimity(int n);
  static SyntheticGame additive(std::vector<double> weights);
  static SyntheticGame threshold(std::vector<double> weights, double quota);
  static SyntheticGame planted_subset(int n, std::vector<int> members);

  PlayerUniverse universe() const;
  ValueFn fn() const;
  // Closed form where one exists; weighted voting falls back to exact
  // enumeration.
  std::vector<double> exact_values() const;
};

// ---------------------------------------------------------------------------
// Memoization
// ---------------------------------------------------------------------------

// Wraps a deterministic value function with a cache keyed on the canonical
// sorted coalition. Thread-tolerant: concurrent evaluation of the same key
// may evaluate twice, both writes store the same value.
ValueFn memoized(ValueFn inner);

// ---------------------------------------------------------------------------
// Toy retrainable evaluator
// ---------------------------------------------------------------------------

// Scorer model: skills are the tokens with the configured prefix appearing
// in the retained reference steps of the training coalition. An example
// whose query demands skills the scorer lacks generates correct candidates
// with probability p_unskilled; otherwise p_skilled (or p_easy when the
// query demands nothing).
struct ToyScorerParams {
  double p_skilled = 1.0;
  double p_unskilled = 0.0;
  double p_easy = 0.9;
  std::string skill_prefix = "skill_";
  SimLaw law_template;       // Q/A score laws; p_correct is set per example
  int retrain_iterations = 1;  // budget knob for approximate-update variants
};

// Coalition value through the full loop: retrain the scorer on the
// coalition, recalibrate with fresh derived randomness keyed by the
// canonical coalition, construct the set at the target, and score
// 1 - miscoverage. Abstention maps to value 0.
class ToyRetrainEvaluator {
 public:
  ToyRetrainEvaluator(Dataset training, Dataset calibration, Example target,
                      CalibrationConfig base_config, ToyScorerParams params,
                      SeedTree stream);

  double evaluate_example_coalition(std::span<const PlayerId> coalition) const;
  double evaluate_step_coalition(std::span<const PlayerId> coalition) const;

  ValueFn example_fn() const;
  ValueFn step_fn() const;

  const Dataset& training() const { return training_; }
  const Example& target() const { return target_; }

 private:
  double run_pipeline(const std::vector<std::string>& skills,
                      std::uint64_t coalition_key) const;

  Dataset training_;
  Dataset calibration_;
  Example target_;
  CalibrationConfig base_config_;
  ToyScorerParams params_;
  SeedTree stream_;
};

// ---------------------------------------------------------------------------
// Planted corpus (acceptance fixtures)
// ---------------------------------------------------------------------------

// Describes a toy training universe with one pivotal example and step whose
// skill token alone unlocks the target, together with the exact Shapley
// values the induced games must have.
struct PlantedCorpus {
  std::string name;
  int n_examples = 8;
  int steps_per_example = 4;
  std::string pivotal_example;
  int pivotal_step = 2;
  std::string skill_token = "skill_k7";
  std::map<std::string, double> expected_example_shapley;
  std::vector<std::pair<PlayerId, double>> expected_step_shapley;
  ToyScorerParams scorer;
  int n_cal = 40;

  Dataset training() const;
  Dataset calibration() const;
  Example target() const;
  CalibrationConfig base_config() const;

  static PlantedCorpus load_file(const std::string& path);
  static PlantedCorpus load_string(const std::string& text);
  std::string to_json_string() const;
};

}  // namespace corap
