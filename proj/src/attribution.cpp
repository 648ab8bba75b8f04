#include "corap/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "corap/version.hpp"

namespace corap {

using nlohmann::json;

double hoeffding_radius(int permutations, double delta, int universe_size) {
  if (permutations < 1) {
    throw std::domain_error("hoeffding_radius: permutations must be >= 1");
  }
  if (delta <= 0.0 || delta >= 1.0) {
    throw std::domain_error("hoeffding_radius: delta must lie in (0,1)");
  }
  if (universe_size < 1) {
    throw std::domain_error("hoeffding_radius: universe must be non-empty");
  }
  return 2.0 * std::sqrt(std::log(2.0 * universe_size / delta) /
                         (2.0 * permutations));
}

namespace {

void kahan_add(double& sum, double& comp, double term) {
  const double y = term - comp;
  const double t = sum + y;
  comp = (t - sum) - y;
  sum = t;
}

double call_value_fn(const ValueFn& fn, std::span<const PlayerId> coalition) {
  try {
    return fn(coalition);
  } catch (const std::exception& e) {
    std::string members;
    for (const auto& p : coalition) {
      if (!members.empty()) members += ", ";
      members += p.display();
    }
    throw std::runtime_error("value function failed on coalition {" + members +
                             "}: " + e.what());
  }
}

}  // namespace

ShapleyEstimates mc_shapley(const ValueFn& value_fn,
                            const PlayerUniverse& universe, int permutations,
                            double delta, const SeedTree& stream) {
  const int n = static_cast<int>(universe.players.size());
  if (n == 0) throw std::invalid_argument("mc_shapley: empty universe");
  if (permutations < 1) {
    throw std::invalid_argument("mc_shapley: permutations must be >= 1");
  }
  ShapleyEstimates est;
  est.players = universe.players;
  est.permutations = permutations;
  est.delta = delta;
  est.radius = hoeffding_radius(permutations, delta, n);

  std::vector<double> sums(n, 0.0), comps(n, 0.0);
  std::vector<int> order(n);
  std::vector<PlayerId> prefix;
  prefix.reserve(n);
  for (int m = 0; m < permutations; ++m) {
    Rng rng = stream.child("perm", m).stream();
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.next_below(i + 1));
      std::swap(order[i], order[j]);
    }
    prefix.clear();
    double v_prev = call_value_fn(value_fn, prefix);
    for (int pos = 0; pos < n; ++pos) {
      prefix.push_back(universe.players[order[pos]]);
      const double v_cur = call_value_fn(value_fn, prefix);
      kahan_add(sums[order[pos]], comps[order[pos]], v_cur - v_prev);
      v_prev = v_cur;
    }
  }
  est.phat.resize(n);
  for (int i = 0; i < n; ++i) {
    est.phat[i] = sums[i] / static_cast<double>(permutations);
  }
  return est;
}

std::vector<double> exact_shapley(const ValueFn& value_fn,
                                  const PlayerUniverse& universe) {
  const int n = static_cast<int>(universe.players.size());
  if (n == 0) throw std::invalid_argument("exact_shapley: empty universe");
  if (n > 12) {
    throw std::invalid_argument(
        "exact_shapley: universe too large for enumeration (max 12)");
  }
  const std::size_t total = std::size_t{1} << n;
  std::vector<double> value(total);
  std::vector<PlayerId> coalition;
  coalition.reserve(n);
  for (std::size_t mask = 0; mask < total; ++mask) {
    coalition.clear();
    for (int i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) coalition.push_back(universe.players[i]);
    }
    value[mask] = call_value_fn(value_fn, coalition);
  }
  std::vector<long double> factorial(n + 1, 1.0L);
  for (int i = 1; i <= n; ++i) factorial[i] = factorial[i - 1] * i;
  std::vector<double> phi(n, 0.0);
  for (int u = 0; u < n; ++u) {
    const std::size_t bit = std::size_t{1} << u;
    long double acc = 0.0L;
    for (std::size_t mask = 0; mask < total; ++mask) {
      if (mask & bit) continue;
      const int s = std::popcount(mask);
      const long double weight =
          factorial[s] * factorial[n - s - 1] / factorial[n];
      acc += weight * (static_cast<long double>(value[mask | bit]) -
                       static_cast<long double>(value[mask]));
    }
    phi[u] = static_cast<double>(acc);
  }
  return phi;
}

GreedySelection certified_greedy(const ShapleyEstimates& estimates,
                                 double alpha) {
  const std::size_t n = estimates.players.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (estimates.lcb(a) != estimates.lcb(b)) {
      return estimates.lcb(a) > estimates.lcb(b);
    }
    return estimates.players[a] < estimates.players[b];
  });
  GreedySelection sel;
  const double target = 1.0 - alpha;
  for (std::size_t idx : order) {
    sel.selected.push_back(estimates.players[idx]);
    sel.cumulative_lcb += estimates.lcb(idx);
    if (sel.cumulative_lcb >= target) {
      sel.feasible = true;
      return sel;
    }
  }
  sel.feasible = false;
  return sel;
}

WarmStartResult group_warm_start(const ValueFn& value_fn,
                                 const PlayerUniverse& universe, int groups,
                                 int m0, const SeedTree& stream) {
  if (groups < 1) throw std::invalid_argument("group_warm_start: groups >= 1");
  if (m0 < 1) throw std::invalid_argument("group_warm_start: m0 >= 1");
  const int n = static_cast<int>(universe.players.size());
  WarmStartResult result;
  result.universe = universe;
  const int g_count = std::min(groups, n);
  if (g_count <= 1) return result;  // identity restriction

  // Contiguous blocks in stable id order.
  std::vector<PlayerId> sorted = universe.players;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::vector<PlayerId>> blocks(g_count);
  for (int i = 0; i < n; ++i) {
    blocks[static_cast<int>(static_cast<long>(i) * g_count / n)].push_back(
        sorted[i]);
  }

  std::vector<double> sums(g_count, 0.0);
  std::vector<bool> flipped(g_count, false);
  std::vector<int> order(g_count);
  std::vector<PlayerId> prefix;
  prefix.reserve(n);
  for (int m = 0; m < m0; ++m) {
    Rng rng = stream.child("group_perm", m).stream();
    std::iota(order.begin(), order.end(), 0);
    for (int i = g_count - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.next_below(i + 1));
      std::swap(order[i], order[j]);
    }
    prefix.clear();
    double v_prev = call_value_fn(value_fn, prefix);
    for (int g : order) {
      prefix.insert(prefix.end(), blocks[g].begin(), blocks[g].end());
      const double v_cur = call_value_fn(value_fn, prefix);
      sums[g] += v_cur - v_prev;
      if (v_prev < 1.0 && v_cur >= 1.0) flipped[g] = true;
      v_prev = v_cur;
    }
  }
  int best = -1;
  for (int g = 0; g < g_count; ++g) {
    if (!flipped[g]) continue;
    if (best < 0 || sums[g] > sums[best]) best = g;
  }
  if (best < 0) {
    result.no_active_group = true;  // caller keeps the full universe
    return result;
  }
  result.universe.players = blocks[best];
  result.restricted = true;
  result.group_index = best;
  return result;
}

namespace {

AttributionReport run_level(const ValueFn& value_fn,
                            const PlayerUniverse& universe,
                            PlayerUniverse::Kind level, int permutations,
                            double delta, double xi,
                            const AttributionConfig& cfg,
                            const SeedTree& stream) {
  AttributionReport report;
  report.level = level;
  report.alpha = cfg.alpha;
  report.delta = delta;
  report.xi = xi;
  report.permutations = permutations;
  report.root_seed = stream.root_seed();

  // Event H: attribution is conditioned on the base model failing.
  const double empty_value = call_value_fn(value_fn, {});
  if (empty_value != 0.0) {
    throw TargetCoveredError(
        "base model does not fail on this target (value of the empty "
        "coalition is " +
        std::to_string(empty_value) + ", expected 0)");
  }
  report.base_model_failed = true;

  PlayerUniverse active = universe;
  if (level == PlayerUniverse::Kind::example && cfg.groups > 1) {
    WarmStartResult ws = group_warm_start(value_fn, universe, cfg.groups,
                                          cfg.warm_start_permutations,
                                          stream.child("warm_start", 0));
    report.warm_start_applied = ws.restricted;
    report.warm_start_group = ws.group_index;
    report.warm_start_no_active_group = ws.no_active_group;
    active = std::move(ws.universe);
  }

  report.estimates = mc_shapley(value_fn, active, permutations, delta,
                                stream.child("shapley", 0));
  GreedySelection sel = certified_greedy(report.estimates, cfg.alpha);
  report.selected = std::move(sel.selected);
  report.feasible = sel.feasible;
  report.cumulative_lcb = sel.cumulative_lcb;
  if (cfg.verify_selection) {
    report.verification_value = call_value_fn(value_fn, report.selected);
  }
  return report;
}

}  // namespace

AttributionReport explain_examples(const ValueFn& example_value_fn,
                                   const Dataset& training,
                                   const AttributionConfig& cfg,
                                   const SeedTree& stream) {
  PlayerUniverse universe;
  universe.kind = PlayerUniverse::Kind::example;
  for (const auto& ex : training.examples) {
    universe.players.push_back({ex.id, -1});
  }
  if (universe.players.empty()) {
    throw std::invalid_argument("explain_examples: empty training universe");
  }
  return run_level(example_value_fn, universe, PlayerUniverse::Kind::example,
                   cfg.permutations_examples, cfg.delta_examples,
                   cfg.xi_examples, cfg, stream);
}

AttributionReport explain_steps(const ValueFn& step_value_fn,
                                const Dataset& training,
                                std::span<const PlayerId> selected_examples,
                                const AttributionConfig& cfg,
                                const SeedTree& stream) {
  if (selected_examples.empty()) {
    throw std::invalid_argument("explain_steps: no selected examples");
  }
  PlayerUniverse universe;
  universe.kind = PlayerUniverse::Kind::step;
  for (const auto& sel : selected_examples) {
    const Example* ex = training.find(sel.example_id);
    if (!ex) {
      throw std::invalid_argument("explain_steps: unknown example id " +
                                  sel.example_id);
    }
    for (int s = 0; s < static_cast<int>(ex->reference_steps.size()); ++s) {
      universe.players.push_back({ex->id, s});
    }
  }
  if (universe.players.empty()) {
    throw std::invalid_argument(
        "explain_steps: selected examples have no reference steps");
  }
  return run_level(step_value_fn, universe, PlayerUniverse::Kind::step,
                   cfg.permutations_steps, cfg.delta_steps, cfg.xi_steps, cfg,
                   stream);
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace {

json player_to_json(const PlayerId& p) {
  if (p.is_step()) {
    return json{{"example_id", p.example_id}, {"step_index", p.step_index}};
  }
  return json{{"example_id", p.example_id}};
}

PlayerId player_from_json(const json& j) {
  PlayerId p;
  p.example_id = j.at("example_id").get<std::string>();
  p.step_index = j.value("step_index", -1);
  return p;
}

std::string format_double(double v) {
  char buf[64];
  const int len = std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::string(buf, len);
}

}  // namespace

std::string attribution_to_json(const AttributionReport& report) {
  json j;
  j["schema"] = "corap.attribution.v1";
  j["toolkit_version"] = kToolkitVersion;
  j["level"] =
      report.level == PlayerUniverse::Kind::example ? "example" : "step";
  j["alpha"] = report.alpha;
  j["delta"] = report.delta;
  j["xi"] = report.xi;
  j["certified_risk_level"] = report.alpha + report.xi;
  j["permutations"] = report.permutations;
  j["radius"] = report.estimates.radius;
  j["root_seed"] = report.root_seed;
  j["base_model_failed"] = report.base_model_failed;
  if (!report.target_id.empty()) j["target_id"] = report.target_id;
  json estimates = json::array();
  for (std::size_t i = 0; i < report.estimates.players.size(); ++i) {
    estimates.push_back(json{{"player", player_to_json(report.estimates.players[i])},
                             {"phat", report.estimates.phat[i]},
                             {"radius", report.estimates.radius},
                             {"lcb", report.estimates.lcb(i)}});
  }
  j["estimates"] = estimates;
  std::vector<std::size_t> order(report.estimates.players.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (report.estimates.lcb(a) != report.estimates.lcb(b)) {
      return report.estimates.lcb(a) > report.estimates.lcb(b);
    }
    return report.estimates.players[a] < report.estimates.players[b];
  });
  json ranking = json::array();
  for (std::size_t idx : order) {
    ranking.push_back(player_to_json(report.estimates.players[idx]));
  }
  j["ranking"] = ranking;
  json selected = json::array();
  for (const auto& p : report.selected) selected.push_back(player_to_json(p));
  j["selected"] = selected;
  j["feasible"] = report.feasible;
  j["cumulative_lcb"] = report.cumulative_lcb;
  if (report.verification_value) {
    j["verification_value"] = *report.verification_value;
  }
  j["warm_start"] = json{{"applied", report.warm_start_applied},
                         {"group_index", report.warm_start_group},
                         {"no_active_group", report.warm_start_no_active_group}};
  return j.dump(2);
}

AttributionReport attribution_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("schema").get<std::string>() != "corap.attribution.v1") {
    throw std::invalid_argument("unsupported attribution artifact schema: " +
                                j.at("schema").get<std::string>());
  }
  AttributionReport report;
  report.level = j.at("level").get<std::string>() == "step"
                     ? PlayerUniverse::Kind::step
                     : PlayerUniverse::Kind::example;
  report.alpha = j.at("alpha").get<double>();
  report.delta = j.at("delta").get<double>();
  report.xi = j.at("xi").get<double>();
  report.permutations = j.at("permutations").get<int>();
  report.root_seed = j.at("root_seed").get<std::uint64_t>();
  report.base_model_failed = j.at("base_model_failed").get<bool>();
  report.target_id = j.value("target_id", "");
  report.estimates.radius = j.at("radius").get<double>();
  report.estimates.permutations = report.permutations;
  report.estimates.delta = report.delta;
  for (const auto& e : j.at("estimates")) {
    report.estimates.players.push_back(player_from_json(e.at("player")));
    report.estimates.phat.push_back(e.at("phat").get<double>());
  }
  for (const auto& p : j.at("selected")) {
    report.selected.push_back(player_from_json(p));
  }
  report.feasible = j.at("feasible").get<bool>();
  report.cumulative_lcb = j.at("cumulative_lcb").get<double>();
  if (j.contains("verification_value")) {
    report.verification_value = j.at("verification_value").get<double>();
  }
  const auto& ws = j.at("warm_start");
  report.warm_start_applied = ws.at("applied").get<bool>();
  report.warm_start_group = ws.at("group_index").get<int>();
  report.warm_start_no_active_group = ws.at("no_active_group").get<bool>();
  return report;
}

std::string ranking_csv(const AttributionReport& report) {
  std::vector<std::size_t> order(report.estimates.players.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (report.estimates.lcb(a) != report.estimates.lcb(b)) {
      return report.estimates.lcb(a) > report.estimates.lcb(b);
    }
    return report.estimates.players[a] < report.estimates.players[b];
  });
  std::set<PlayerId> selected(report.selected.begin(), report.selected.end());
  std::ostringstream out;
  out << "player,phat,radius,lcb,selected\n";
  for (std::size_t idx : order) {
    out << report.estimates.players[idx].display() << ','
        << format_double(report.estimates.phat[idx]) << ','
        << format_double(report.estimates.radius) << ','
        << format_double(report.estimates.lcb(idx)) << ','
        << (selected.count(report.estimates.players[idx]) ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace corap
