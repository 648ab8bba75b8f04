#pragma once

#include <optional>
#include <string>
#include <vector>

#include "corap/admission.hpp"
#include "corap/core.hpp"
#include "corap/generation.hpp"
#include "corap/prediction_set.hpp"

namespace corap {

// Exact lower-tail binomial CDF Pr(Binom(n, alpha) <= s), accumulated in
// log space for stability. Monotone non-decreasing in s.
double binomial_tail_p(int n, double alpha, int s);

// Rank-based split conformal quantile: the ceil((n+1)(1-alpha))-th smallest
// score, or +infinity when that index exceeds n.
double split_cp_quantile(std::vector<double> scores, double alpha);

enum class FwerMethod { bonferroni, fixed_sequence };

std::string to_string(FwerMethod m);
FwerMethod fwer_method_from_string(std::string_view s);

// Threshold grid: an explicit tuple list, or a cross product of per-axis
// values.
struct GridSpec {
  std::vector<ThresholdTuple> explicit_tuples;
  std::vector<double> lambda1_values;
  std::vector<double> lambda2_values;
  std::vector<double> lambda3_values;

  std::vector<ThresholdTuple> materialize() const;
  static GridSpec default_grid();
};

struct CalibrationConfig {
  double alpha = 0.3;
  double epsilon = 0.2;
  GridSpec grid = GridSpec::default_grid();
  FwerMethod fwer_method = FwerMethod::bonferroni;
  SamplerConfig sampler;
  AdmissionConfig admission;
  AnswerQualityMode answer_quality_mode = AnswerQualityMode::geometric_mean;
  int jobs = 1;
};

struct LambdaEvaluation {
  ThresholdTuple lambda;
  int failures = 0;        // S(lambda)
  double empirical_risk = 0.0;
  double mean_set_size = 0.0;
  double p_value = 1.0;
};

struct GridEvaluation {
  std::vector<LambdaEvaluation> rows;
  int n_cal = 0;
};

// Replays every pool under every grid tuple and aggregates failure counts,
// set sizes, and binomial-tail p-values.
GridEvaluation evaluate_grid(
    const std::vector<std::vector<GeneratedSequence>>& pools,
    const Dataset& cal, const CalibrationConfig& cfg);

// Family-wise error rate control over the grid p-values. Bonferroni keeps
// tuples with p <= epsilon/|grid|. fixed_sequence walks the grid most
// conservative first (descending lambda1, lambda2, lambda3 lexicographically)
// and keeps tuples while p <= epsilon, stopping at the first failure.
std::vector<ThresholdTuple> fwer_select(const GridEvaluation& evals,
                                        double epsilon, FwerMethod method);

// Valid tuple with minimal mean set size; ties go to the lexicographically
// larger (more conservative) tuple. Empty input means abstention.
std::optional<ThresholdTuple> choose_lambda(
    const std::vector<ThresholdTuple>& valid, const GridEvaluation& evals);

struct CalibrationOutcome {
  std::vector<ThresholdTuple> valid_set;
  std::optional<ThresholdTuple> chosen;
  bool abstained = true;
  GridEvaluation evaluations;
  CalibrationConfig config;
  std::uint64_t root_seed = 0;
  std::string backend_tag;
};

// Full calibration pass: per-example pools on independent derived streams,
// grid evaluation, FWER selection, and minimal-size choice.
CalibrationOutcome calibrate(GenerationBackend& backend, const Dataset& cal,
                             const CalibrationConfig& cfg,
                             const SeedTree& stream);

struct TestRecord {
  std::string id;
  int loss = 0;
  int set_size = 0;
  int stopped_at = 0;
  StopReason stop_reason = StopReason::budget_exhausted;
};

struct TestEvaluation {
  double empirical_loss = 0.0;
  double mean_set_size = 0.0;
  std::vector<TestRecord> records;
};

// Deploys a calibrated tuple on fresh examples with live set construction.
TestEvaluation evaluate_test(GenerationBackend& backend, const Dataset& test,
                             const ThresholdTuple& lambda,
                             const CalibrationConfig& cfg,
                             const SeedTree& stream);

// Artifact (de)serialization. JSON keeps non-finite thresholds as strings.
std::string calibration_to_json(const CalibrationOutcome& outcome,
                                const std::string& backend_spec = "");
CalibrationOutcome calibration_from_json(const std::string& text);
std::string grid_csv(const GridEvaluation& evals);

}  // namespace corap
