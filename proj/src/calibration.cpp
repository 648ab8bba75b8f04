#include "corap/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <atomic>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "corap/version.hpp"

namespace corap {

using nlohmann::json;

double binomial_tail_p(int n, double alpha, int s) {
  if (n <= 0) throw std::domain_error("binomial_tail_p: n must be positive");
  if (alpha <= 0.0 || alpha >= 1.0) {
    throw std::domain_error("binomial_tail_p: alpha must lie in (0,1)");
  }
  if (s < 0 || s > n) throw std::domain_error("binomial_tail_p: s outside [0,n]");
  if (s == n) return 1.0;
  const long double la = std::log(static_cast<long double>(alpha));
  const long double l1a = std::log1p(-static_cast<long double>(alpha));
  const long double lg_n = std::lgammal(static_cast<long double>(n) + 1.0L);
  long double sum = 0.0L;
  for (int i = 0; i <= s; ++i) {
    const long double log_term = lg_n -
                                 std::lgammal(static_cast<long double>(i) + 1.0L) -
                                 std::lgammal(static_cast<long double>(n - i) + 1.0L) +
                                 i * la + (n - i) * l1a;
    sum += expl(log_term);
  }
  return std::clamp(static_cast<double>(sum), 0.0, 1.0);
}

double split_cp_quantile(std::vector<double> scores, double alpha) {
  if (scores.empty()) {
    throw std::invalid_argument("split_cp_quantile: empty scores");
  }
  const auto n = scores.size();
  const double rank = std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha));
  if (rank > static_cast<double>(n)) {
    return std::numeric_limits<double>::infinity();
  }
  const auto k = static_cast<std::size_t>(rank);
  std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
  return scores[k - 1];
}

std::string to_string(FwerMethod m) {
  return m == FwerMethod::bonferroni ? "bonferroni" : "fixed_sequence";
}

FwerMethod fwer_method_from_string(std::string_view s) {
  if (s == "bonferroni") return FwerMethod::bonferroni;
  if (s == "fixed_sequence") return FwerMethod::fixed_sequence;
  throw std::invalid_argument("unknown FWER method: " + std::string(s));
}

std::vector<ThresholdTuple> GridSpec::materialize() const {
  if (!explicit_tuples.empty()) return explicit_tuples;
  std::vector<ThresholdTuple> grid;
  grid.reserve(lambda1_values.size() * lambda2_values.size() *
               lambda3_values.size());
  for (double l1 : lambda1_values) {
    for (double l2 : lambda2_values) {
      for (double l3 : lambda3_values) {
        if (l3 < 0.0 || l3 > 1.0) {
          throw std::invalid_argument("GridSpec: lambda3 outside [0,1]");
        }
        grid.push_back({l1, l2, l3});
      }
    }
  }
  if (grid.empty()) throw std::invalid_argument("GridSpec: empty grid");
  return grid;
}

GridSpec GridSpec::default_grid() {
  GridSpec spec;
  spec.lambda1_values = {-5, -4, -3, -2, -1};
  spec.lambda2_values = {-4, -3, -2, -1, 0};
  spec.lambda3_values = {0.1, 0.3, 0.5, 0.7, 0.9};
  return spec;
}

namespace {

void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  std::mutex error_mu;
  std::exception_ptr first_error;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += jobs) {
          {
            std::lock_guard<std::mutex> lock(error_mu);
            if (first_error) return;
          }
          body(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Lexicographic comparison, larger thresholds first.
bool more_conservative(const ThresholdTuple& a, const ThresholdTuple& b) {
  if (a.lambda1 != b.lambda1) return a.lambda1 > b.lambda1;
  if (a.lambda2 != b.lambda2) return a.lambda2 > b.lambda2;
  return a.lambda3 > b.lambda3;
}

}  // namespace

GridEvaluation evaluate_grid(
    const std::vector<std::vector<GeneratedSequence>>& pools,
    const Dataset& cal, const CalibrationConfig& cfg) {
  if (pools.size() != cal.examples.size()) {
    throw std::invalid_argument("evaluate_grid: pool count != dataset size");
  }
  if (cal.examples.empty()) {
    throw std::invalid_argument("evaluate_grid: empty calibration set");
  }
  const auto grid = cfg.grid.materialize();
  const int n = static_cast<int>(cal.examples.size());
  GridEvaluation out;
  out.n_cal = n;
  out.rows.resize(grid.size());
  parallel_for(static_cast<int>(grid.size()), cfg.jobs, [&](int g) {
    LambdaEvaluation row;
    row.lambda = grid[g];
    long size_sum = 0;
    for (int i = 0; i < n; ++i) {
      PredictionSet set =
          replay_set(pools[i], grid[g], cfg.answer_quality_mode);
      row.failures += ra_loss(cal.examples[i], set.members, cfg.admission);
      size_sum += static_cast<long>(set.members.size());
    }
    row.empirical_risk = static_cast<double>(row.failures) / n;
    row.mean_set_size = static_cast<double>(size_sum) / n;
    row.p_value = binomial_tail_p(n, cfg.alpha, row.failures);
    out.rows[g] = row;
  });
  return out;
}

std::vector<ThresholdTuple> fwer_select(const GridEvaluation& evals,
                                        double epsilon, FwerMethod method) {
  std::vector<ThresholdTuple> valid;
  if (method == FwerMethod::bonferroni) {
    const double cutoff = epsilon / static_cast<double>(evals.rows.size());
    for (const auto& row : evals.rows) {
      if (row.p_value <= cutoff) valid.push_back(row.lambda);
    }
    return valid;
  }
  // fixed_sequence: spend the full budget on each tuple in a declared order,
  // stopping at the first non-rejection.
  std::vector<int> order(evals.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return more_conservative(evals.rows[a].lambda, evals.rows[b].lambda);
  });
  for (int idx : order) {
    if (evals.rows[idx].p_value > epsilon) break;
    valid.push_back(evals.rows[idx].lambda);
  }
  return valid;
}

std::optional<ThresholdTuple> choose_lambda(
    const std::vector<ThresholdTuple>& valid, const GridEvaluation& evals) {
  if (valid.empty()) return std::nullopt;
  auto size_of = [&](const ThresholdTuple& t) {
    for (const auto& row : evals.rows) {
      if (row.lambda == t) return row.mean_set_size;
    }
    throw std::invalid_argument("choose_lambda: tuple missing from grid");
  };
  ThresholdTuple best = valid.front();
  double best_size = size_of(best);
  for (std::size_t i = 1; i < valid.size(); ++i) {
    const double size = size_of(valid[i]);
    if (size < best_size ||
        (size == best_size && more_conservative(valid[i], best))) {
      best = valid[i];
      best_size = size;
    }
  }
  return best;
}

CalibrationOutcome calibrate(GenerationBackend& backend, const Dataset& cal,
                             const CalibrationConfig& cfg,
                             const SeedTree& stream) {
  if (cal.examples.empty()) {
    throw std::invalid_argument("calibrate: calibration set is empty");
  }
  const int n = static_cast<int>(cal.examples.size());
  std::vector<std::vector<GeneratedSequence>> pools(n);
  std::atomic<int> completed{0};
  try {
    parallel_for(n, cfg.jobs, [&](int i) {
      pools[i] = sample_pool(backend, cal.examples[i], cfg.sampler,
                             stream.child("cal_example", i));
      completed.fetch_add(1, std::memory_order_relaxed);
    });
  } catch (const BackendError& e) {
    throw BackendError("calibrate aborted with " +
                       std::to_string(completed.load()) + "/" +
                       std::to_string(n) + " example pools sampled: " +
                       e.what());
  }
  CalibrationOutcome outcome;
  outcome.evaluations = evaluate_grid(pools, cal, cfg);
  outcome.valid_set = fwer_select(outcome.evaluations, cfg.epsilon,
                                  cfg.fwer_method);
  outcome.chosen = choose_lambda(outcome.valid_set, outcome.evaluations);
  outcome.abstained = !outcome.chosen.has_value();
  outcome.config = cfg;
  outcome.root_seed = stream.root_seed();
  outcome.backend_tag = backend.model_tag();
  return outcome;
}

TestEvaluation evaluate_test(GenerationBackend& backend, const Dataset& test,
                             const ThresholdTuple& lambda,
                             const CalibrationConfig& cfg,
                             const SeedTree& stream) {
  TestEvaluation out;
  const int n = static_cast<int>(test.examples.size());
  out.records.resize(n);
  parallel_for(n, cfg.jobs, [&](int i) {
    PredictionSet set =
        construct_set(backend, test.examples[i], lambda, cfg.sampler,
                      stream.child("test_example", i),
                      cfg.answer_quality_mode);
    TestRecord rec;
    rec.id = test.examples[i].id;
    rec.loss = ra_loss(test.examples[i], set.members, cfg.admission);
    rec.set_size = static_cast<int>(set.members.size());
    rec.stopped_at = set.stopped_at;
    rec.stop_reason = set.stop_reason;
    out.records[i] = rec;
  });
  long loss_sum = 0, size_sum = 0;
  for (const auto& rec : out.records) {
    loss_sum += rec.loss;
    size_sum += rec.set_size;
  }
  out.empirical_loss = n > 0 ? static_cast<double>(loss_sum) / n : 0.0;
  out.mean_set_size = n > 0 ? static_cast<double>(size_sum) / n : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Artifact serialization
// ---------------------------------------------------------------------------

namespace {

json threshold_value_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  if (std::isnan(v)) throw std::invalid_argument("threshold is NaN");
  return json(v);
}

double threshold_value_from_json(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("bad threshold value: " + s);
  }
  return j.get<double>();
}

json tuple_to_json(const ThresholdTuple& t) {
  return json::array({threshold_value_to_json(t.lambda1),
                      threshold_value_to_json(t.lambda2),
                      threshold_value_to_json(t.lambda3)});
}

ThresholdTuple tuple_from_json(const json& j) {
  return {threshold_value_from_json(j.at(0)),
          threshold_value_from_json(j.at(1)),
          threshold_value_from_json(j.at(2))};
}

json config_to_json(const CalibrationConfig& cfg) {
  json grid = json::array();
  for (const auto& t : cfg.grid.materialize()) grid.push_back(tuple_to_json(t));
  return json{
      {"alpha", cfg.alpha},
      {"epsilon", cfg.epsilon},
      {"fwer_method", to_string(cfg.fwer_method)},
      {"grid", grid},
      {"sampler",
       {{"temperature", cfg.sampler.temperature},
        {"top_p", cfg.sampler.top_p},
        {"k_max", cfg.sampler.k_max}}},
      {"admission",
       {{"rouge_threshold", cfg.admission.rouge_threshold},
        {"answer_normalization",
         to_string(cfg.admission.answer_normalization)}}},
      {"answer_quality_mode",
       cfg.answer_quality_mode == AnswerQualityMode::geometric_mean
           ? "geometric_mean"
           : "joint"}};
}

CalibrationConfig config_from_json(const json& j) {
  CalibrationConfig cfg;
  cfg.alpha = j.at("alpha").get<double>();
  cfg.epsilon = j.at("epsilon").get<double>();
  cfg.fwer_method = fwer_method_from_string(j.at("fwer_method").get<std::string>());
  cfg.grid.explicit_tuples.clear();
  for (const auto& t : j.at("grid")) {
    cfg.grid.explicit_tuples.push_back(tuple_from_json(t));
  }
  const auto& sampler = j.at("sampler");
  cfg.sampler.temperature = sampler.at("temperature").get<double>();
  cfg.sampler.top_p = sampler.at("top_p").get<double>();
  cfg.sampler.k_max = sampler.at("k_max").get<int>();
  const auto& admission = j.at("admission");
  cfg.admission.rouge_threshold = admission.at("rouge_threshold").get<double>();
  cfg.admission.answer_normalization = answer_normalization_from_string(
      admission.at("answer_normalization").get<std::string>());
  cfg.answer_quality_mode =
      j.at("answer_quality_mode").get<std::string>() == "joint"
          ? AnswerQualityMode::joint
          : AnswerQualityMode::geometric_mean;
  return cfg;  // jobs is execution infrastructure, not part of the echo
}

}  // namespace

std::string calibration_to_json(const CalibrationOutcome& outcome,
                                const std::string& backend_spec) {
  json j;
  j["schema"] = "corap.calibration.v1";
  j["toolkit_version"] = kToolkitVersion;
  j["root_seed"] = outcome.root_seed;
  j["backend_tag"] = outcome.backend_tag;
  if (!backend_spec.empty()) j["backend_spec"] = backend_spec;
  j["config"] = config_to_json(outcome.config);
  j["n_cal"] = outcome.evaluations.n_cal;
  json rows = json::array();
  for (const auto& row : outcome.evaluations.rows) {
    rows.push_back(json{{"lambda", tuple_to_json(row.lambda)},
                        {"failures", row.failures},
                        {"empirical_risk", row.empirical_risk},
                        {"mean_set_size", row.mean_set_size},
                        {"p_value", row.p_value}});
  }
  j["evaluations"] = rows;
  json valid = json::array();
  for (const auto& t : outcome.valid_set) valid.push_back(tuple_to_json(t));
  j["valid_set"] = valid;
  j["abstained"] = outcome.abstained;
  j["chosen"] = outcome.chosen ? tuple_to_json(*outcome.chosen) : json();
  return j.dump(2);
}

CalibrationOutcome calibration_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("schema").get<std::string>() != "corap.calibration.v1") {
    throw std::invalid_argument("unsupported calibration artifact schema: " +
                                j.at("schema").get<std::string>());
  }
  CalibrationOutcome outcome;
  outcome.root_seed = j.at("root_seed").get<std::uint64_t>();
  outcome.backend_tag = j.value("backend_tag", "");
  outcome.config = config_from_json(j.at("config"));
  outcome.evaluations.n_cal = j.at("n_cal").get<int>();
  for (const auto& row : j.at("evaluations")) {
    LambdaEvaluation ev;
    ev.lambda = tuple_from_json(row.at("lambda"));
    ev.failures = row.at("failures").get<int>();
    ev.empirical_risk = row.at("empirical_risk").get<double>();
    ev.mean_set_size = row.at("mean_set_size").get<double>();
    ev.p_value = row.at("p_value").get<double>();
    outcome.evaluations.rows.push_back(ev);
  }
  for (const auto& t : j.at("valid_set")) {
    outcome.valid_set.push_back(tuple_from_json(t));
  }
  outcome.abstained = j.at("abstained").get<bool>();
  if (!j.at("chosen").is_null()) {
    outcome.chosen = tuple_from_json(j.at("chosen"));
  }
  if (outcome.abstained != !outcome.chosen.has_value()) {
    throw std::invalid_argument(
        "calibration artifact: abstained flag inconsistent with chosen tuple");
  }
  return outcome;
}

namespace {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const int len = std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::string(buf, len);
}

}  // namespace

std::string grid_csv(const GridEvaluation& evals) {
  std::ostringstream out;
  out << "lambda1,lambda2,lambda3,failures,empirical_risk,mean_set_size,p_value\n";
  for (const auto& row : evals.rows) {
    out << format_double(row.lambda.lambda1) << ','
        << format_double(row.lambda.lambda2) << ','
        << format_double(row.lambda.lambda3) << ',' << row.failures << ','
        << format_double(row.empirical_risk) << ','
        << format_double(row.mean_set_size) << ','
        << format_double(row.p_value) << '\n';
  }
  return out.str();
}

}  // namespace corap
