#include "corap/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "corap/attribution.hpp"
#include "corap/calibration.hpp"
#include "corap/core.hpp"
#include "corap/evaluators.hpp"
#include "corap/generation.hpp"
#include "corap/prediction_set.hpp"
#include "corap/quality.hpp"
#include "corap/sim_risk.hpp"
#include "corap/version.hpp"

namespace corap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Atomic write: temp file in the target directory, then rename.
void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string hash_hex(const std::string& bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

json file_ref(const fs::path& path) {
  return json{{"path", path.filename().string()},
              {"content_hash", hash_hex(read_file(path.string()))}};
}

// Backend spec: "sim:<profile.json>" or "remote:<url>".
struct BackendHandle {
  std::shared_ptr<GenerationBackend> backend;
  std::string spec;
  std::optional<SimProfile> profile;  // set for simulated backends
};

BackendHandle make_backend(const std::string& spec, int remote_timeout = 30,
                           int remote_retries = 2) {
  if (spec.rfind("sim:", 0) == 0) {
    BackendHandle h;
    h.spec = spec;
    h.profile = SimProfile::from_json_file(spec.substr(4));
    h.backend = simulated_backend(*h.profile);
    return h;
  }
  if (spec.rfind("remote:", 0) == 0) {
    RemoteConfig cfg;
    cfg.base_url = spec.substr(7);
    cfg.timeout_seconds = remote_timeout;
    cfg.retries = remote_retries;
    if (const char* token = std::getenv("CORAP_REMOTE_TOKEN")) {
      cfg.auth_token = token;
    }
    if (const char* seeded = std::getenv("CORAP_REMOTE_HONORS_SEED")) {
      cfg.honors_seed = std::string(seeded) == "1";
    }
    BackendHandle h;
    h.spec = spec;
    h.backend = remote_backend(cfg);
    return h;
  }
  throw UsageError("backend must be sim:<profile.json> or remote:<url>, got " +
                   spec);
}

// Grid spec: "@tuples.json" holding [[l1,l2,l3],...] or
// "l1=-5,-4;l2=-3,-2;l3=0.1,0.5" for a cross product.
std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
    } else if (item == "-inf") {
      out.push_back(-std::numeric_limits<double>::infinity());
    } else {
      out.push_back(std::stod(item));
    }
  }
  return out;
}

GridSpec parse_grid(const std::string& spec) {
  GridSpec grid;
  if (spec.empty()) return GridSpec::default_grid();
  if (spec[0] == '@') {
    json j = json::parse(read_file(spec.substr(1)));
    for (const auto& t : j) {
      grid.explicit_tuples.push_back({t.at(0).get<double>(),
                                      t.at(1).get<double>(),
                                      t.at(2).get<double>()});
    }
    if (grid.explicit_tuples.empty()) throw UsageError("grid file is empty");
    return grid;
  }
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ';')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) {
      throw UsageError("bad grid axis (want l1=v,v;l2=...;l3=...): " + part);
    }
    const std::string axis = part.substr(0, eq);
    const auto values = parse_values(part.substr(eq + 1));
    if (axis == "l1") {
      grid.lambda1_values = values;
    } else if (axis == "l2") {
      grid.lambda2_values = values;
    } else if (axis == "l3") {
      grid.lambda3_values = values;
    } else {
      throw UsageError("unknown grid axis: " + axis);
    }
  }
  return grid;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const int len = std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::string(buf, len);
}

// Non-finite thresholds travel as strings in JSON.
json threshold_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

void print_warnings(const std::vector<std::string>& warnings,
                    const std::string& path) {
  for (const auto& w : warnings) {
    std::cerr << "warning: " << path << ": " << w << '\n';
  }
}

void warn_on_role_overlap(const Dataset& a, const char* a_name,
                          const Dataset& b, const char* b_name) {
  std::set<std::string> ids;
  for (const auto& ex : a.examples) ids.insert(ex.id);
  for (const auto& ex : b.examples) {
    if (ids.count(ex.id)) {
      std::cerr << "warning: example id \"" << ex.id << "\" appears in both "
                << a_name << " and " << b_name << " datasets\n";
    }
  }
}

// Shared flags for commands that run the sampler + grid machinery.
struct CommonOptions {
  double alpha = 0.3;
  double epsilon = 0.2;
  int k_max = 16;
  std::string grid_spec;
  std::string fwer = "bonferroni";
  std::string answer_norm = "casefold_trim";
  std::string answer_quality = "geometric_mean";
  double rouge_threshold = 0.2;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out_dir = ".";
  std::string backend_spec;
  int remote_timeout = 30;
  int remote_retries = 2;

  BackendHandle backend() const {
    return make_backend(backend_spec, remote_timeout, remote_retries);
  }

  CalibrationConfig calibration_config() const {
    CalibrationConfig cfg;
    cfg.alpha = alpha;
    cfg.epsilon = epsilon;
    cfg.grid = parse_grid(grid_spec);
    cfg.fwer_method = fwer_method_from_string(fwer);
    cfg.sampler.k_max = k_max;
    cfg.admission.rouge_threshold = rouge_threshold;
    cfg.admission.answer_normalization =
        answer_normalization_from_string(answer_norm);
    if (answer_quality == "joint") {
      cfg.answer_quality_mode = AnswerQualityMode::joint;
    } else if (answer_quality != "geometric_mean") {
      throw UsageError("--answer-quality must be geometric_mean or joint");
    }
    cfg.jobs = jobs;
    return cfg;
  }
};

void add_common_options(CLI::App* cmd, CommonOptions& opts,
                        bool wants_backend = true) {
  cmd->add_option("--alpha", opts.alpha, "Target risk level in (0,1)");
  cmd->add_option("--epsilon", opts.epsilon, "FWER level in (0,1)");
  cmd->add_option("--kmax", opts.k_max, "Sampling budget per example");
  cmd->add_option("--grid", opts.grid_spec,
                  "Threshold grid: l1=..;l2=..;l3=.. or @tuples.json");
  cmd->add_option("--fwer", opts.fwer, "bonferroni or fixed_sequence");
  cmd->add_option("--answer-norm", opts.answer_norm,
                  "exact, casefold_trim, or numeric");
  cmd->add_option("--answer-quality", opts.answer_quality,
                  "geometric_mean (length-normalized) or joint");
  cmd->add_option("--rouge-threshold", opts.rouge_threshold,
                  "Admission threshold (inclusive)");
  cmd->add_option("--seed", opts.seed, "Root seed");
  cmd->add_option("--jobs", opts.jobs, "Worker threads");
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--remote-timeout", opts.remote_timeout,
                  "Remote request timeout in seconds");
  cmd->add_option("--remote-retries", opts.remote_retries,
                  "Remote retry count");
  if (wants_backend) {
    cmd->add_option("--backend", opts.backend_spec,
                    "sim:<profile.json> or remote:<url>")
        ->required();
  }
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

int cmd_calibrate(const CommonOptions& opts, const std::string& cal_path) {
  std::vector<std::string> warnings;
  Dataset cal = load_dataset_file(cal_path, DatasetRole::calibration, &warnings);
  print_warnings(warnings, cal_path);
  BackendHandle backend = opts.backend();
  CalibrationConfig cfg = opts.calibration_config();
  SeedTree root(opts.seed);
  CalibrationOutcome outcome =
      calibrate(*backend.backend, cal, cfg, root.child("calibrate", 0));

  const fs::path out_dir(opts.out_dir);
  write_file(out_dir / "calibration.json",
             calibration_to_json(outcome, backend.spec));
  write_file(out_dir / "calibration_grid.csv", grid_csv(outcome.evaluations));
  if (outcome.abstained) {
    std::cerr << "calibration abstained: no threshold tuple certified at "
                 "epsilon="
              << opts.epsilon << '\n';
    return kExitAbstained;
  }
  const ThresholdTuple& t = *outcome.chosen;
  std::cout << "chosen lambda = (" << format_double(t.lambda1) << ", "
            << format_double(t.lambda2) << ", " << format_double(t.lambda3)
            << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const CommonOptions& opts, const std::string& artifact_path,
                const std::string& inputs_path) {
  CalibrationOutcome outcome =
      calibration_from_json(read_file(artifact_path));
  if (outcome.abstained) {
    std::cerr << "refusing to predict: the calibration artifact abstained\n";
    return kExitAbstained;
  }
  std::string backend_spec = opts.backend_spec;
  if (backend_spec.empty()) {
    json artifact = json::parse(read_file(artifact_path));
    backend_spec = artifact.value("backend_spec", "");
    if (backend_spec.empty()) {
      throw UsageError(
          "artifact carries no backend_spec; pass --backend explicitly");
    }
  }
  BackendHandle backend =
      make_backend(backend_spec, opts.remote_timeout, opts.remote_retries);
  std::vector<std::string> warnings;
  Dataset inputs = load_dataset_file(inputs_path, DatasetRole::test, &warnings);
  print_warnings(warnings, inputs_path);

  CalibrationConfig cfg = outcome.config;
  SeedTree root(opts.seed);
  json records = json::array();
  for (std::size_t i = 0; i < inputs.examples.size(); ++i) {
    const Example& ex = inputs.examples[i];
    PredictionSet set = construct_set(
        *backend.backend, ex, *outcome.chosen, cfg.sampler,
        root.child("predict_example", i), cfg.answer_quality_mode);
    json members = json::array();
    for (const auto& seq : set.members) {
      members.push_back(json{
          {"steps", seq.steps},
          {"answer", seq.answer},
          {"q", sequence_quality(seq)},
          {"a", answer_quality(seq, cfg.answer_quality_mode)},
          {"sample_index", seq.sample_index}});
    }
    records.push_back(json{{"id", ex.id},
                           {"stopped_at", set.stopped_at},
                           {"stop_reason", to_string(set.stop_reason)},
                           {"members", members}});
  }
  json out;
  out["schema"] = "corap.predictions.v1";
  out["calibration_ref"] = file_ref(artifact_path);
  out["lambda"] = json::array({threshold_json(outcome.chosen->lambda1),
                               threshold_json(outcome.chosen->lambda2),
                               threshold_json(outcome.chosen->lambda3)});
  out["root_seed"] = opts.seed;
  out["records"] = records;
  write_file(fs::path(opts.out_dir) / "predictions.json", out.dump(2));
  std::cout << "predicted " << records.size() << " input(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

Dataset synthetic_dataset(const std::string& prefix, int count,
                          DatasetRole role) {
  Dataset ds;
  ds.role = role;
  for (int i = 0; i < count; ++i) {
    Example ex;
    ex.id = prefix + std::to_string(i);
    ex.query = "synthetic query " + std::to_string(i);
    ex.reference_steps = {"synthetic first step", "synthetic second step"};
    ex.reference_answer = "0";
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

int cmd_simulate(const CommonOptions& opts, int trials, int n_cal, int n_test,
                 double resample_fraction) {
  if (trials < 1) throw UsageError("--trials must be >= 1");
  if (n_cal < 1) throw UsageError("--ncal must be >= 1");
  BackendHandle backend = opts.backend();
  if (!backend.profile) {
    throw UsageError("simulate requires a simulated backend (sim:<profile>)");
  }
  CalibrationConfig cfg = opts.calibration_config();
  const SimLaw& law = backend.profile->default_law;
  SeedTree root(opts.seed);

  // True risk of a tuple under the profile law: exact for point laws,
  // Monte Carlo otherwise.
  auto true_risk = [&](const ThresholdTuple& t, const SeedTree& stream) {
    if (law.all_point()) {
      return sim_true_risk(law, t, cfg.sampler.k_max, cfg.answer_quality_mode);
    }
    return sim_true_risk_mc(law, t, cfg.sampler.k_max, cfg.answer_quality_mode,
                            20000, stream);
  };

  const Dataset master =
      synthetic_dataset("cal", n_cal, DatasetRole::calibration);
  std::ostringstream csv;
  csv << "trial,seed,abstained,chosen_failures,test_loss,mean_set_size,"
         "true_risk,risk_ok\n";
  int ok_count = 0;
  for (int t = 0; t < trials; ++t) {
    SeedTree trial_stream = root.child("trial", t);
    Dataset cal;
    if (resample_fraction > 0.0) {
      // Subset resampling from one master calibration pool.
      cal.role = DatasetRole::calibration;
      const int subset =
          std::max(1, static_cast<int>(resample_fraction * n_cal));
      Rng rng = trial_stream.child("resample", 0).stream();
      std::vector<int> idx(n_cal);
      std::iota(idx.begin(), idx.end(), 0);
      for (int i = 0; i < subset; ++i) {
        const int j = i + static_cast<int>(rng.next_below(n_cal - i));
        std::swap(idx[i], idx[j]);
      }
      idx.resize(subset);
      std::sort(idx.begin(), idx.end());
      for (int i : idx) cal.examples.push_back(master.examples[i]);
    } else {
      cal = master;
    }
    CalibrationOutcome outcome = calibrate(*backend.backend, cal, cfg,
                                           trial_stream.child("calibrate", 0));
    const std::uint64_t trial_seed = trial_stream.node_seed();
    if (outcome.abstained) {
      ++ok_count;  // nothing selected, nothing violated
      csv << t << ',' << trial_seed << ",1,,,,,1\n";
      continue;
    }
    int chosen_failures = 0;
    for (const auto& row : outcome.evaluations.rows) {
      if (row.lambda == *outcome.chosen) chosen_failures = row.failures;
    }
    const Dataset test = synthetic_dataset("test", n_test, DatasetRole::test);
    TestEvaluation eval =
        evaluate_test(*backend.backend, test, *outcome.chosen, cfg,
                      trial_stream.child("test", 0));
    const double risk =
        true_risk(*outcome.chosen, trial_stream.child("risk_mc", 0));
    const bool risk_ok = risk <= cfg.alpha;
    if (risk_ok) ++ok_count;
    csv << t << ',' << trial_seed << ",0," << chosen_failures << ','
        << format_double(eval.empirical_loss) << ','
        << format_double(eval.mean_set_size) << ',' << format_double(risk)
        << ',' << (risk_ok ? 1 : 0) << '\n';
  }
  csv << "aggregate,,,,,,,"
      << format_double(static_cast<double>(ok_count) / trials) << '\n';
  write_file(fs::path(opts.out_dir) / "simulate.csv", csv.str());
  std::cout << "risk-ok fraction: "
            << format_double(static_cast<double>(ok_count) / trials) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

ToyScorerParams scorer_params_from_profile(const std::string& profile_path,
                                           const SimLaw& default_law) {
  ToyScorerParams params;
  params.law_template = default_law;
  json j = json::parse(read_file(profile_path));
  if (j.contains("toy")) {
    const auto& t = j.at("toy");
    params.p_skilled = t.value("p_skilled", params.p_skilled);
    params.p_unskilled = t.value("p_unskilled", params.p_unskilled);
    params.p_easy = t.value("p_easy", params.p_easy);
    params.skill_prefix = t.value("skill_prefix", params.skill_prefix);
  }
  return params;
}

int cmd_explain(const CommonOptions& opts, const std::string& level,
                const std::string& train_path, const std::string& cal_path,
                const std::string& targets_path, const std::string& target_id,
                const AttributionConfig& acfg_in,
                const std::string& examples_report_path) {
  if (level != "examples" && level != "steps") {
    throw UsageError("--level must be examples or steps");
  }
  if (level == "steps" && examples_report_path.empty()) {
    throw UsageError("--level steps requires --examples-report");
  }
  if (opts.backend_spec.rfind("sim:", 0) != 0) {
    throw UsageError(
        "explain requires a retrainable simulated backend (sim:<profile>)");
  }
  std::vector<std::string> warnings;
  Dataset train = load_dataset_file(train_path, DatasetRole::training, &warnings);
  print_warnings(warnings, train_path);
  warnings.clear();
  Dataset cal = load_dataset_file(cal_path, DatasetRole::calibration, &warnings);
  print_warnings(warnings, cal_path);
  warnings.clear();
  Dataset targets = load_dataset_file(targets_path, DatasetRole::test, &warnings);
  print_warnings(warnings, targets_path);
  warn_on_role_overlap(train, "training", cal, "calibration");
  warn_on_role_overlap(train, "training", targets, "test");
  warn_on_role_overlap(cal, "calibration", targets, "test");

  const Example* target = targets.find(target_id);
  if (!target) {
    throw UsageError("target id \"" + target_id + "\" not found in " +
                     targets_path);
  }

  const std::string profile_path = opts.backend_spec.substr(4);
  SimProfile profile = SimProfile::from_json_file(profile_path);
  ToyScorerParams scorer =
      scorer_params_from_profile(profile_path, profile.default_law);

  AttributionConfig acfg = acfg_in;
  acfg.alpha = opts.alpha;
  SeedTree root(opts.seed);
  ToyRetrainEvaluator evaluator(train, cal, *target,
                                opts.calibration_config(), scorer,
                                root.child("evaluator", 0));

  const fs::path out_dir(opts.out_dir);
  if (level == "examples") {
    AttributionReport report =
        explain_examples(memoized(evaluator.example_fn()), train, acfg,
                         root.child("explain_examples", 0));
    report.target_id = target_id;
    json j = json::parse(attribution_to_json(report));
    write_file(out_dir / "explain_examples.json", j.dump(2));
    write_file(out_dir / "explain_examples_ranking.csv", ranking_csv(report));
    std::cout << "selected " << report.selected.size() << " example(s), "
              << (report.feasible ? "feasible" : "infeasible") << '\n';
    return kExitOk;
  }

  AttributionReport examples_report =
      attribution_from_json(read_file(examples_report_path));
  if (examples_report.level != PlayerUniverse::Kind::example) {
    throw UsageError("--examples-report is not an example-level report");
  }
  AttributionReport report =
      explain_steps(memoized(evaluator.step_fn()), train,
                    examples_report.selected, acfg,
                    root.child("explain_steps", 0));
  report.target_id = target_id;
  json j = json::parse(attribution_to_json(report));
  j["examples_report_ref"] = file_ref(examples_report_path);
  write_file(out_dir / "explain_steps.json", j.dump(2));
  write_file(out_dir / "explain_steps_ranking.csv", ranking_csv(report));
  std::cout << "selected " << report.selected.size() << " step(s), "
            << (report.feasible ? "feasible" : "infeasible") << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const std::string& out_dir,
               const std::vector<std::string>& artifact_paths) {
  if (artifact_paths.empty()) {
    throw UsageError("report needs at least one artifact");
  }
  std::ostringstream loss_csv, ranking_csv_out;
  loss_csv << "artifact,alpha,epsilon,n_cal,abstained,lambda1,lambda2,lambda3,"
              "failures,empirical_risk,mean_set_size\n";
  ranking_csv_out << "artifact,level,player,phat,radius,lcb,selected\n";
  json manifest;
  manifest["schema"] = "corap.report_manifest.v1";
  manifest["inputs"] = json::array();

  int rows = 0;
  for (const auto& path : artifact_paths) {
    const std::string text = read_file(path);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw UsageError("artifact " + path + " is not JSON: " + e.what());
    }
    const std::string schema = j.value("schema", "");
    manifest["inputs"].push_back(json{
        {"path", path}, {"schema", schema}, {"content_hash", hash_hex(text)}});
    const std::string name = fs::path(path).filename().string();
    if (schema == "corap.calibration.v1") {
      CalibrationOutcome outcome = calibration_from_json(text);
      loss_csv << name << ',' << format_double(outcome.config.alpha) << ','
               << format_double(outcome.config.epsilon) << ','
               << outcome.evaluations.n_cal << ','
               << (outcome.abstained ? 1 : 0);
      if (outcome.chosen) {
        const LambdaEvaluation* chosen_row = nullptr;
        for (const auto& row : outcome.evaluations.rows) {
          if (row.lambda == *outcome.chosen) chosen_row = &row;
        }
        loss_csv << ',' << format_double(outcome.chosen->lambda1) << ','
                 << format_double(outcome.chosen->lambda2) << ','
                 << format_double(outcome.chosen->lambda3) << ','
                 << (chosen_row ? chosen_row->failures : -1) << ','
                 << format_double(chosen_row ? chosen_row->empirical_risk : -1)
                 << ','
                 << format_double(chosen_row ? chosen_row->mean_set_size : -1);
      } else {
        loss_csv << ",,,,,,";
      }
      loss_csv << '\n';
      ++rows;
    } else if (schema == "corap.attribution.v1") {
      AttributionReport report = attribution_from_json(text);
      std::set<PlayerId> selected(report.selected.begin(),
                                  report.selected.end());
      std::vector<std::size_t> order(report.estimates.players.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return report.estimates.lcb(a) > report.estimates.lcb(b);
      });
      for (std::size_t idx : order) {
        ranking_csv_out << name << ','
                        << (report.level == PlayerUniverse::Kind::example
                                ? "example"
                                : "step")
                        << ',' << report.estimates.players[idx].display() << ','
                        << format_double(report.estimates.phat[idx]) << ','
                        << format_double(report.estimates.radius) << ','
                        << format_double(report.estimates.lcb(idx)) << ','
                        << (selected.count(report.estimates.players[idx]) ? 1
                                                                          : 0)
                        << '\n';
      }
      ++rows;
    } else if (schema == "corap.predictions.v1") {
      // carried in the manifest only
      ++rows;
    } else {
      throw UsageError("artifact " + path + " has unsupported schema \"" +
                       schema + "\"");
    }
  }
  if (rows == 0) throw UsageError("no usable artifacts given");
  const fs::path dir(out_dir);
  write_file(dir / "report_loss.csv", loss_csv.str());
  write_file(dir / "report_ranking.csv", ranking_csv_out.str());
  write_file(dir / "report_manifest.json", manifest.dump(2));
  std::cout << "report written for " << rows << " artifact(s)\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Conformal reasoning-answer prediction toolkit"};
  app.set_version_flag("--version", kToolkitVersion);
  app.set_config("--config", "", "Read defaults from an INI/TOML file");
  app.require_subcommand(1);

  // calibrate
  CommonOptions cal_opts;
  std::string cal_dataset;
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "Calibrate threshold tuples");
  add_common_options(calibrate_cmd, cal_opts);
  calibrate_cmd->add_option("--cal", cal_dataset, "Calibration dataset (JSONL)")
      ->required();

  // predict
  CommonOptions pred_opts;
  std::string pred_artifact, pred_inputs;
  auto* predict_cmd =
      app.add_subcommand("predict", "Construct prediction sets");
  add_common_options(predict_cmd, pred_opts, /*wants_backend=*/false);
  predict_cmd->add_option("--backend", pred_opts.backend_spec,
                          "Override the artifact's backend");
  predict_cmd->add_option("--artifact", pred_artifact, "Calibration artifact")
      ->required();
  predict_cmd->add_option("--inputs", pred_inputs, "Input examples (JSONL)")
      ->required();

  // simulate
  CommonOptions sim_opts;
  int sim_trials = 100, sim_ncal = 200, sim_ntest = 200;
  double sim_resample = 0.0;
  auto* simulate_cmd =
      app.add_subcommand("simulate", "Seeded coverage study on a profile");
  add_common_options(simulate_cmd, sim_opts);
  simulate_cmd->add_option("--trials", sim_trials, "Trial count");
  simulate_cmd->add_option("--ncal", sim_ncal, "Calibration size per trial");
  simulate_cmd->add_option("--ntest", sim_ntest, "Test size per trial");
  simulate_cmd->add_option(
      "--resample-fraction", sim_resample,
      "Draw each trial's calibration set as a subset of one master pool");

  // explain
  CommonOptions exp_opts;
  AttributionConfig acfg;
  std::string exp_level = "examples", exp_train, exp_cal, exp_targets;
  std::string exp_target_id, exp_examples_report;
  auto* explain_cmd =
      app.add_subcommand("explain", "Certified Shapley attribution");
  add_common_options(explain_cmd, exp_opts);
  explain_cmd->add_option("--level", exp_level, "examples or steps");
  explain_cmd->add_option("--train", exp_train, "Training dataset (JSONL)")
      ->required();
  explain_cmd->add_option("--cal", exp_cal, "Calibration dataset (JSONL)")
      ->required();
  explain_cmd->add_option("--targets", exp_targets, "Target examples (JSONL)")
      ->required();
  explain_cmd->add_option("--target-id", exp_target_id, "Target example id")
      ->required();
  explain_cmd->add_option("--permutations", acfg.permutations_examples,
                          "Monte Carlo permutations");
  explain_cmd->add_option("--delta", acfg.delta_examples,
                          "Estimation failure budget");
  explain_cmd->add_option("--groups", acfg.groups, "Warm-start group count");
  explain_cmd->add_option("--warmstart", acfg.warm_start_permutations,
                          "Warm-start permutations (m0)");
  explain_cmd->add_option("--xi", acfg.xi_examples,
                          "Declared retraining error bound");
  explain_cmd->add_flag("--verify", acfg.verify_selection,
                        "Re-evaluate the selected subset directly");
  explain_cmd->add_option("--examples-report", exp_examples_report,
                          "Prior example-level report (steps level)");

  // report
  std::string report_out = ".";
  std::vector<std::string> report_artifacts;
  auto* report_cmd =
      app.add_subcommand("report", "Merge artifacts into CSV tables");
  report_cmd->add_option("--out", report_out, "Output directory");
  report_cmd->add_option("artifacts", report_artifacts, "Artifact files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (calibrate_cmd->parsed()) return cmd_calibrate(cal_opts, cal_dataset);
    if (predict_cmd->parsed()) {
      return cmd_predict(pred_opts, pred_artifact, pred_inputs);
    }
    if (simulate_cmd->parsed()) {
      return cmd_simulate(sim_opts, sim_trials, sim_ncal, sim_ntest,
                          sim_resample);
    }
    if (explain_cmd->parsed()) {
      acfg.permutations_steps = acfg.permutations_examples;
      acfg.delta_steps = acfg.delta_examples;
      acfg.xi_steps = acfg.xi_examples;
      return cmd_explain(exp_opts, exp_level, exp_train, exp_cal, exp_targets,
                         exp_target_id, acfg, exp_examples_report);
    }
    if (report_cmd->parsed()) return cmd_report(report_out, report_artifacts);
  } catch (const TargetCoveredError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitTargetCovered;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

}  // namespace corap::cli
