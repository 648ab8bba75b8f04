#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corap/core.hpp"

namespace corap {

// A player is a training example, or one reasoning step of a training
// example (step_index >= 0).
struct PlayerId {
  std::string example_id;
  int step_index = -1;

  bool is_step() const { return step_index >= 0; }
  std::string display() const {
    return is_step() ? example_id + "[" + std::to_string(step_index) + "]"
                     : example_id;
  }
  auto operator<=>(const PlayerId&) const = default;
};

struct PlayerUniverse {
  enum class Kind { example, step };
  Kind kind = Kind::example;
  std::vector<PlayerId> players;
};

// Coalition value function: a set function over players, bounded in [0,1],
// deterministic given its construction-time seed. The argument order carries
// no meaning.
using ValueFn = std::function<double(std::span<const PlayerId>)>;

// Uniform estimation radius 2*sqrt(ln(2|P|/delta) / (2M)) from Hoeffding's
// inequality plus a union bound over the universe.
double hoeffding_radius(int permutations, double delta, int universe_size);

struct ShapleyEstimates {
  std::vector<PlayerId> players;
  std::vector<double> phat;
  double radius = 0.0;  // shared across players
  int permutations = 0;
  double delta = 0.0;

  double lcb(std::size_t i) const { return phat[i] - radius; }
};

// Permutation-sampling estimator: M uniform permutations, one prefix walk
// per permutation serving every player, so exactly M*(|P|+1) value-function
// evaluations are issued. Per-player sums use compensated accumulation, so
// results do not depend on evaluation order.
ShapleyEstimates mc_shapley(const ValueFn& value_fn,
                            const PlayerUniverse& universe, int permutations,
                            double delta, const SeedTree& stream);

// Exact values by subset-weighted summation; universe capped at 12 players.
std::vector<double> exact_shapley(const ValueFn& value_fn,
                                  const PlayerUniverse& universe);

struct GreedySelection {
  std::vector<PlayerId> selected;  // prefix of the LCB-descending order
  bool feasible = false;
  double cumulative_lcb = 0.0;
};

// Shortest prefix of the LCB-descending order whose certified mass reaches
// 1 - alpha. Ties in LCB break by player id. Infeasible selections return
// every player.
GreedySelection certified_greedy(const ShapleyEstimates& estimates,
                                 double alpha);

struct WarmStartResult {
  PlayerUniverse universe;
  bool restricted = false;
  int group_index = -1;
  bool no_active_group = false;
};

// Groupwise preselection: partitions the players into `groups` contiguous
// blocks in id order, runs a group-level permutation estimate with m0
// permutations, and returns the highest-estimate group among those whose
// inclusion was observed to flip the value to 1. Falls back to the full
// universe when no group ever flips.
WarmStartResult group_warm_start(const ValueFn& value_fn,
                                 const PlayerUniverse& universe, int groups,
                                 int m0, const SeedTree& stream);

struct AttributionConfig {
  int permutations_examples = 256;
  int permutations_steps = 256;
  double delta_examples = 0.25;
  double delta_steps = 0.25;
  double alpha = 0.3;
  double xi_examples = 0.0;  // echoed assumption input, report-only
  double xi_steps = 0.0;
  int groups = 1;
  int warm_start_permutations = 32;
  bool verify_selection = false;
};

struct AttributionReport {
  PlayerUniverse::Kind level = PlayerUniverse::Kind::example;
  ShapleyEstimates estimates;
  std::vector<PlayerId> selected;
  bool feasible = false;
  double cumulative_lcb = 0.0;
  bool base_model_failed = false;  // event H
  double alpha = 0.0;
  double delta = 0.0;
  double xi = 0.0;
  int permutations = 0;
  std::optional<double> verification_value;
  bool warm_start_applied = false;
  int warm_start_group = -1;
  bool warm_start_no_active_group = false;
  std::uint64_t root_seed = 0;
  std::string target_id;
};

// Raised when the base model already covers the target, so the attribution
// precondition (event H) fails.
struct TargetCoveredError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Example-level driver: verifies the base model fails on the target
// (value of the empty coalition is 0), optionally warm-starts, estimates,
// and selects a certified subset at level alpha.
AttributionReport explain_examples(const ValueFn& example_value_fn,
                                   const Dataset& training,
                                   const AttributionConfig& cfg,
                                   const SeedTree& stream);

// Step-level driver over the reasoning steps of the selected examples.
AttributionReport explain_steps(const ValueFn& step_value_fn,
                                const Dataset& training,
                                std::span<const PlayerId> selected_examples,
                                const AttributionConfig& cfg,
                                const SeedTree& stream);

std::string attribution_to_json(const AttributionReport& report);
AttributionReport attribution_from_json(const std::string& text);
std::string ranking_csv(const AttributionReport& report);

}  // namespace corap
