#pragma once

// Scenario files and the experiment harness. A scenario JSON names a typed
// population, a matching rule, and the update parameters; running one emits
// the CSV artifacts the convergence and sweep experiments are re-plotted
// from, plus a machine-readable report of the end state. Sweeps rerun a base
// scenario across a parameter axis and tabulate the designer objectives.

#include <atomic>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "peermatch/dynamics.hpp"

namespace peermatch {

struct scenario {
  int version = 1;
  std::string name = "scenario";
  std::vector<agent_spec> types;  // type_id 1..T in file order
  std::vector<int> counts;        // agents per type
  matching_rule_spec rule;
  double mu = 0.1;
  std::vector<double> theta0{1.0};  // one value = uniform start
  step_mode mode = step_mode::expected;
  std::uint64_t seed = 0;
  double tol = 1e-8;
  long max_iterations = 10000;
  bool require_assumption2 = true;    // insist on >= 2 agents per type
  std::vector<std::string> warnings;  // collected while loading
};

// ---- JSON (de)serialization -------------------------------------------

inline function_spec function_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("family") || !j.contains("params"))
    throw std::invalid_argument(where + ": expected {\"family\", \"params\"}");
  if (!j["params"].is_array())
    throw std::invalid_argument(where + ".params: expected an array of numbers");
  std::vector<double> params;
  for (const auto& p : j["params"]) {
    if (!p.is_number()) throw std::invalid_argument(where + ".params: non-numeric entry");
    params.push_back(p.get<double>());
  }
  return make_function(j["family"].get<std::string>(), params);
}

inline nlohmann::json function_to_json(const function_spec& f) {
  return {{"family", family_name(f.kind)}, {"params", function_params(f)}};
}

inline matching_rule_spec rule_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rule"))
    throw std::invalid_argument("rule: expected {\"rule\": <name>, ...}");
  const auto kind = rule_from_name(j["rule"].get<std::string>());
  auto num = [&](const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw std::invalid_argument(std::string("rule.") + key + ": not a number");
    return j[key].get<double>();
  };
  switch (kind) {
    case rule_kind::baseline: return matching_rule_spec::baseline();
    case rule_kind::asymmetric: return matching_rule_spec::asymmetric(num("gamma", 0.0));
    case rule_kind::long_range:
      return matching_rule_spec::long_range(num("gamma_r", 0.0), num("gamma_p", 0.0));
    case rule_kind::rating_independent: return matching_rule_spec::rating_independent();
  }
  throw std::logic_error("rule_from_json: unhandled rule kind");
}

inline nlohmann::json rule_to_json(const matching_rule_spec& r) {
  nlohmann::json j{{"rule", rule_name(r.kind)}};
  if (r.kind == rule_kind::asymmetric) j["gamma"] = r.gamma;
  if (r.kind == rule_kind::long_range) {
    j["gamma_r"] = r.gamma_r;
    j["gamma_p"] = r.gamma_p;
  }
  return j;
}

inline scenario scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("scenario: top level must be an object");
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != 1)
    throw std::invalid_argument("scenario.version: missing or unsupported (expected 1)");

  scenario sc;
  if (j.contains("name")) sc.name = j["name"].get<std::string>();
  if (!j.contains("mu") || !j["mu"].is_number())
    throw std::invalid_argument("scenario.mu: missing or not a number");
  sc.mu = j["mu"].get<double>();
  if (!(sc.mu > 0.0 && sc.mu < 1.0))
    throw std::invalid_argument("scenario.mu: must lie strictly inside (0,1)");

  if (!j.contains("rule")) throw std::invalid_argument("scenario.rule: missing");
  sc.rule = rule_from_json(j["rule"]);

  if (!j.contains("types") || !j["types"].is_array() || j["types"].empty())
    throw std::invalid_argument("scenario.types: expected a non-empty array");
  if (j.contains("require_assumption2")) sc.require_assumption2 = j["require_assumption2"].get<bool>();

  int type_id = 1;
  for (const auto& tj : j["types"]) {
    const std::string where = "scenario.types[" + std::to_string(type_id - 1) + "]";
    if (!tj.is_object()) throw std::invalid_argument(where + ": expected an object");
    agent_spec a;
    a.type_id = type_id;
    if (!tj.contains("count") || !tj["count"].is_number_integer())
      throw std::invalid_argument(where + ".count: missing or not an integer");
    const int count = tj["count"].get<int>();
    if (count < 1) throw std::invalid_argument(where + ".count: must be >= 1");
    if (sc.require_assumption2 && count < 2)
      throw std::invalid_argument(where + ".count: at least 2 agents per type are required for the "
                                          "same-rating matching guarantee (set require_assumption2 "
                                          "to false to allow lone agents)");
    auto num = [&](const char* key, double fallback, bool required = false) {
      if (!tj.contains(key)) {
        if (required) throw std::invalid_argument(where + "." + key + ": missing");
        return fallback;
      }
      if (!tj[key].is_number()) throw std::invalid_argument(where + "." + key + ": not a number");
      return tj[key].get<double>();
    };
    a.delta = num("delta", 0.0, true);
    a.alpha = num("alpha", 1.0);
    a.e_max = num("e_max", 1.0);
    if (!tj.contains("cost") || !tj.contains("quality") || !tj.contains("benefit"))
      throw std::invalid_argument(where + ": cost, quality, and benefit are all required");
    a.cost = function_from_json(tj["cost"], where + ".cost");
    a.quality = function_from_json(tj["quality"], where + ".quality");
    a.benefit = function_from_json(tj["benefit"], where + ".benefit");
    validate_agent(a);
    sc.types.push_back(a);
    sc.counts.push_back(count);
    ++type_id;
  }

  if (j.contains("theta0")) {
    if (j["theta0"].is_number()) {
      sc.theta0 = {j["theta0"].get<double>()};
    } else if (j["theta0"].is_array()) {
      sc.theta0.clear();
      for (const auto& v : j["theta0"]) {
        if (!v.is_number()) throw std::invalid_argument("scenario.theta0: non-numeric entry");
        sc.theta0.push_back(v.get<double>());
      }
      std::size_t n = 0;
      for (int c : sc.counts) n += static_cast<std::size_t>(c);
      if (sc.theta0.size() != n)
        throw std::invalid_argument("scenario.theta0: vector length must equal the agent count");
    } else {
      throw std::invalid_argument("scenario.theta0: expected a number or an array");
    }
  }
  for (double v : sc.theta0)
    if (!(v >= 0.0)) throw std::invalid_argument("scenario.theta0: ratings must be >= 0");

  if (j.contains("mode")) {
    const auto m = j["mode"].get<std::string>();
    if (m == "expected") sc.mode = step_mode::expected;
    else if (m == "sampled") sc.mode = step_mode::sampled;
    else throw std::invalid_argument("scenario.mode: expected \"expected\" or \"sampled\"");
  }
  if (j.contains("seed")) sc.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("tol")) {
    sc.tol = j["tol"].get<double>();
    if (!(sc.tol > 0.0)) throw std::invalid_argument("scenario.tol: must be > 0");
  }
  if (j.contains("max_iterations")) {
    sc.max_iterations = j["max_iterations"].get<long>();
    if (sc.max_iterations < 1) throw std::invalid_argument("scenario.max_iterations: must be >= 1");
  }

  // Shape checks per type: hard curve failures stop the load, soft ones
  // (the stock benefit bending down past rating 1) are only worth a warning.
  double rating_hi = 0.0;
  for (const auto& a : sc.types) rating_hi = std::max(rating_hi, eval(a.quality, a.e_max));
  for (std::size_t k = 0; k < sc.types.size(); ++k) {
    const auto rep = validate_assumption1(sc.types[k], rating_hi);
    if (rep.hard_failure()) {
      for (const auto& c : rep.checks)
        if (!c.pass && c.hard)
          throw std::invalid_argument("scenario.types[" + std::to_string(k) + "]: " + c.property +
                                      (c.note.empty() ? "" : " (" + c.note + ")"));
    }
    for (const auto& c : rep.checks)
      if (!c.pass && !c.hard)
        sc.warnings.push_back("type " + std::to_string(k + 1) + ": " + c.property +
                              (c.note.empty() ? "" : " — " + c.note));
  }

  // Low-start screening: a uniform start at or below every type's opt-out
  // threshold freezes the whole population in place, which is never what an
  // experiment wants; a start below just some thresholds is legitimate (those
  // types sink to their thresholds) but worth flagging. Meaningless for the
  // rating-independent rule, whose ratings decay regardless.
  if (sc.rule.kind != rule_kind::rating_independent) {
    double lo_thresh = std::numeric_limits<double>::infinity(), hi_thresh = 0.0;
    for (const auto& a : sc.types) {
      const double th = low_rating_threshold_agent(a, sc.mu);
      lo_thresh = std::min(lo_thresh, th);
      hi_thresh = std::max(hi_thresh, th);
    }
    const double start_hi = *std::max_element(sc.theta0.begin(), sc.theta0.end());
    const double start_lo = *std::min_element(sc.theta0.begin(), sc.theta0.end());
    if (start_hi <= lo_thresh)
      throw std::invalid_argument("scenario.theta0: every start is at or below every type's "
                                  "low-rating threshold (" + std::to_string(lo_thresh) +
                                  "); the dynamics would freeze at t=0");
    if (start_lo <= hi_thresh)
      sc.warnings.push_back("theta0 does not clear the largest per-type hold threshold (" +
                            std::to_string(hi_thresh) + "); expect part of the population to "
                            "drift down rather than climb");
  }
  return sc;
}

inline scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": JSON parse error: " + e.what());
  }
  auto sc = scenario_from_json(j);
  if (sc.name == "scenario") sc.name = path.stem().string();
  return sc;
}

inline population build_population(const scenario& sc) {
  const std::vector<double> per_type(sc.types.size(),
                                     sc.theta0.size() == 1 ? sc.theta0[0] : 0.0);
  auto pop = make_population(sc.types, sc.counts, per_type);
  if (sc.theta0.size() > 1) pop.ratings = rating_profile(sc.theta0);
  return pop;
}

// ---- running one scenario ---------------------------------------------

namespace detail {

inline std::string sanitize_stem(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? std::string("scenario") : out;
}

// Full-precision number formatting shared by every artifact writer, so that
// expected-mode reruns byte-match their goldens.
inline std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

struct run_summary {
  run_result result;
  objective_values objectives;          // at the final state
  ce_report ce;                         // solver-based equilibrium check
  stationarity_report stationarity;     // inequality-based equilibrium check
  long capability_inversions = -1;      // -1 = monitor not applicable
};

// The dynamics run behind both run_scenario and sweep cells; traces go to
// the sink when one is given (sweeps skip it).
inline run_summary run_scenario_core(const scenario& sc, const population& pop,
                                     const std::function<void(const step_view&)>& sink = {},
                                     capability_order_monitor* monitor = nullptr) {
  run_options opts;
  opts.max_iterations = sc.max_iterations;
  opts.tol = sc.tol;
  opts.mode = sc.mode;
  opts.seed = sc.seed;
  if (sink && monitor) {
    opts.observer = [&](const step_view& v) {
      monitor->observe(v.t, v.ratings);
      sink(v);
    };
  } else if (sink) {
    opts.observer = sink;
  } else if (monitor) {
    opts.observer = [&](const step_view& v) { monitor->observe(v.t, v.ratings); };
  }

  run_summary out;
  out.result = run_dynamics(pop, sc.rule, sc.mu, opts);
  if (monitor) {
    monitor->observe(out.result.iterations, out.result.ratings.ratings);
    out.capability_inversions = monitor->applicable()
                                    ? static_cast<long>(monitor->inversions().size())
                                    : -1;
  }
  out.objectives = designer_objectives(pop, out.result.ratings, out.result.efforts, sc.rule);
  out.ce = verify_ce(pop, out.result.ratings, sc.rule, sc.mu, 1e-6);
  out.stationarity = check_equilibrium_inequalities(pop, out.result.ratings, sc.rule, sc.mu);
  return out;
}

struct run_artifacts {
  run_summary summary;
  std::filesystem::path trace_csv;
  std::filesystem::path final_csv;
  std::filesystem::path report_json;
};

// Runs a scenario and writes its three artifacts into out_dir:
//   <name>_trace.csv   one row per slot (per-type ratings and efforts), plus
//                      a terminal row carrying the end-state ratings
//   <name>_final.csv   one row per agent at the end state
//   <name>_report.json verdict, objectives, and both equilibrium checks
inline run_artifacts run_scenario(const scenario& sc, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto stem = detail::sanitize_stem(sc.name);
  run_artifacts art;
  art.trace_csv = out_dir / (stem + "_trace.csv");
  art.final_csv = out_dir / (stem + "_final.csv");
  art.report_json = out_dir / (stem + "_report.json");

  const auto pop = build_population(sc);
  const int n_types = static_cast<int>(sc.types.size());
  std::vector<std::size_t> type_rep(n_types);  // first agent of each type block
  std::size_t at = 0;
  for (int k = 0; k < n_types; ++k) {
    type_rep[k] = at;
    at += static_cast<std::size_t>(sc.counts[k]);
  }

  std::ofstream trace(art.trace_csv);
  if (!trace) throw std::runtime_error("cannot write " + art.trace_csv.string());
  trace << "t";
  for (int k = 1; k <= n_types; ++k) trace << ",type_" << k << "_rating";
  for (int k = 1; k <= n_types; ++k) trace << ",type_" << k << "_effort";
  trace << ",l1_delta,rho,sum_quality,welfare\n";

  auto write_row = [&](long t, const std::vector<double>& ratings,
                       const std::vector<double>& efforts, const std::vector<double>& payoffs,
                       double delta, double rho) {
    double quality = 0.0, welfare = 0.0;
    for (std::size_t i = 0; i < pop.agents.size(); ++i) {
      quality += eval(pop.agents[i].quality, efforts[i]);
      welfare += payoffs[i];
    }
    trace << t;
    for (int k = 0; k < n_types; ++k) trace << ',' << detail::fmt(ratings[type_rep[k]]);
    for (int k = 0; k < n_types; ++k) trace << ',' << detail::fmt(efforts[type_rep[k]]);
    trace << ',' << detail::fmt(delta) << ',' << detail::fmt(rho) << ','
          << detail::fmt(quality) << ',' << detail::fmt(welfare) << '\n';
  };

  capability_order_monitor monitor(pop);
  art.summary = run_scenario_core(
      sc, pop,
      [&](const step_view& v) { write_row(v.t, v.ratings, v.efforts, v.payoffs, v.l1_delta, v.rho); },
      &monitor);
  const auto& r = art.summary.result;
  // terminal row: where the ratings ended up (efforts/payoffs are the last
  // slot's; for a settled run they are already the rest-point values)
  write_row(r.iterations, r.ratings.ratings, r.efforts, r.payoffs, r.final_l1_delta, 0.0);
  trace.close();

  std::ofstream fin(art.final_csv);
  if (!fin) throw std::runtime_error("cannot write " + art.final_csv.string());
  fin << "agent,type,rating,effort,payoff,beta\n";
  for (std::size_t i = 0; i < pop.agents.size(); ++i)
    fin << i << ',' << pop.agents[i].type_id << ',' << detail::fmt(r.ratings[i]) << ','
        << detail::fmt(r.efforts[i]) << ',' << detail::fmt(r.payoffs[i]) << ','
        << detail::fmt(r.betas[i]) << '\n';
  fin.close();

  nlohmann::json rep;
  rep["scenario"] = sc.name;
  rep["rule"] = rule_to_json(sc.rule);
  rep["mu"] = sc.mu;
  rep["mode"] = sc.mode == step_mode::expected ? "expected" : "sampled";
  rep["status"] = run_status_name(r.status);
  rep["iterations"] = r.iterations;
  rep["cycle_length"] = r.cycle_length;
  rep["final_l1_delta"] = r.final_l1_delta;
  rep["max_rho"] = r.max_rho;
  rep["objectives"] = {{"total_quality", art.summary.objectives.total_quality},
                       {"total_welfare", art.summary.objectives.total_welfare},
                       {"mean_quality", art.summary.objectives.mean_quality},
                       {"mean_welfare", art.summary.objectives.mean_welfare}};
  rep["equilibrium"] = {{"best_response_check", art.summary.ce.is_equilibrium},
                        {"max_rating_residual", art.summary.ce.max_rating_residual},
                        {"inequality_check", art.summary.stationarity.holds},
                        {"max_inequality_violation", art.summary.stationarity.max_violation}};
  rep["capability_inversions"] = art.summary.capability_inversions;
  if (!sc.warnings.empty()) rep["warnings"] = sc.warnings;
  std::ofstream rj(art.report_json);
  if (!rj) throw std::runtime_error("cannot write " + art.report_json.string());
  rj << rep.dump(2) << '\n';
  return art;
}

// ---- sweeps ------------------------------------------------------------

struct sweep_spec {
  std::string parameter;  // "gamma" | "gamma_pair" | "mu" | "theta0"
  std::vector<std::vector<double>> values;
  scenario base;
};

inline sweep_spec sweep_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("parameter") || !j.contains("values") || !j.contains("base"))
    throw std::invalid_argument("sweep: expected {\"parameter\", \"values\", \"base\"}");
  sweep_spec sw;
  sw.parameter = j["parameter"].get<std::string>();
  const bool pair = sw.parameter == "gamma_pair";
  if (!pair && sw.parameter != "gamma" && sw.parameter != "mu" && sw.parameter != "theta0")
    throw std::invalid_argument("sweep.parameter: expected gamma, gamma_pair, mu, or theta0");
  if (!j["values"].is_array() || j["values"].empty())
    throw std::invalid_argument("sweep.values: expected a non-empty array");
  for (const auto& v : j["values"]) {
    if (pair) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw std::invalid_argument("sweep.values: gamma_pair entries must be [gamma_r, gamma_p]");
      sw.values.push_back({v[0].get<double>(), v[1].get<double>()});
    } else {
      if (!v.is_number()) throw std::invalid_argument("sweep.values: expected numbers");
      sw.values.push_back({v.get<double>()});
    }
  }
  sw.base = scenario_from_json(j["base"]);
  if (j.contains("name")) sw.base.name = j["name"].get<std::string>();
  return sw;
}

inline sweep_spec load_sweep(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sweep file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": JSON parse error: " + e.what());
  }
  auto sw = sweep_from_json(j);
  if (sw.base.name == "scenario") sw.base.name = path.stem().string();
  return sw;
}

// The base scenario with one cell's parameter value substituted in.
inline scenario sweep_cell_scenario(const sweep_spec& sw, std::size_t idx) {
  scenario sc = sw.base;
  const auto& v = sw.values.at(idx);
  if (sw.parameter == "gamma") {
    sc.rule = matching_rule_spec::asymmetric(v[0]);
  } else if (sw.parameter == "gamma_pair") {
    sc.rule = matching_rule_spec::long_range(v[0], v[1]);
  } else if (sw.parameter == "mu") {
    if (!(v[0] > 0.0 && v[0] < 1.0)) throw std::invalid_argument("sweep: mu value outside (0,1)");
    sc.mu = v[0];
  } else {  // theta0
    sc.theta0 = {v[0]};
  }
  return sc;
}

struct sweep_cell {
  std::vector<double> value;
  run_status status = run_status::max_iterations;
  long iterations = 0;
  objective_values objectives;
  bool equilibrium = false;       // both end-state checks agreed
  bool quality_argmax = false;    // among converged cells
  bool welfare_argmax = false;
};

struct sweep_result {
  std::vector<sweep_cell> cells;
  std::filesystem::path summary_csv;
};

// Runs every cell (in parallel when jobs > 1) and writes one summary CSV.
// Cell order in the file always follows the sweep's value order.
inline sweep_result run_sweep(const sweep_spec& sw, const std::filesystem::path& out_dir,
                              int jobs = 1) {
  std::filesystem::create_directories(out_dir);
  sweep_result out;
  out.cells.resize(sw.values.size());
  out.summary_csv = out_dir / (detail::sanitize_stem(sw.base.name) + "_summary.csv");

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < sw.values.size(); i = next.fetch_add(1)) {
      const auto sc = sweep_cell_scenario(sw, i);
      const auto pop = build_population(sc);
      const auto summary = run_scenario_core(sc, pop);
      auto& cell = out.cells[i];
      cell.value = sw.values[i];
      cell.status = summary.result.status;
      cell.iterations = summary.result.iterations;
      cell.objectives = summary.objectives;
      cell.equilibrium = summary.ce.is_equilibrium && summary.stationarity.holds;
    }
  };
  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(sw.values.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // argmax marks, counted among settled cells only
  std::size_t best_q = sw.values.size(), best_w = sw.values.size();
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    if (out.cells[i].status != run_status::converged) continue;
    if (best_q == sw.values.size() ||
        out.cells[i].objectives.total_quality > out.cells[best_q].objectives.total_quality)
      best_q = i;
    if (best_w == sw.values.size() ||
        out.cells[i].objectives.total_welfare > out.cells[best_w].objectives.total_welfare)
      best_w = i;
  }
  if (best_q < out.cells.size()) out.cells[best_q].quality_argmax = true;
  if (best_w < out.cells.size()) out.cells[best_w].welfare_argmax = true;

  const double n_types = static_cast<double>(sw.base.types.size());
  std::ofstream csv(out.summary_csv);
  if (!csv) throw std::runtime_error("cannot write " + out.summary_csv.string());
  const bool pair = sw.parameter == "gamma_pair";
  csv << (pair ? "gamma_r,gamma_p" : sw.parameter)
      << ",status,iterations,equilibrium,total_quality,mean_quality,per_type_quality,"
         "total_welfare,mean_welfare,per_type_welfare,quality_argmax,welfare_argmax\n";
  for (const auto& c : out.cells) {
    csv << detail::fmt(c.value[0]);
    if (pair) csv << ',' << detail::fmt(c.value[1]);
    csv << ',' << run_status_name(c.status) << ',' << c.iterations << ',' << (c.equilibrium ? 1 : 0)
        << ',' << detail::fmt(c.objectives.total_quality) << ','
        << detail::fmt(c.objectives.mean_quality) << ','
        << detail::fmt(c.objectives.total_quality / n_types) << ','
        << detail::fmt(c.objectives.total_welfare) << ','
        << detail::fmt(c.objectives.mean_welfare) << ','
        << detail::fmt(c.objectives.total_welfare / n_types) << ',' << (c.quality_argmax ? 1 : 0)
        << ',' << (c.welfare_argmax ? 1 : 0) << '\n';
  }
  return out;
}

// ---- golden-file regression --------------------------------------------

struct golden_report {
  bool pass = true;
  std::vector<std::string> diffs;
};

namespace detail {

// Numeric-aware comparison for one artifact: byte equality short-circuits,
// otherwise both files are tokenized on commas/whitespace and numeric cells
// must agree to 1e-10 (absolute), everything else exactly.
inline void compare_artifact(const std::filesystem::path& fresh, const std::filesystem::path& golden,
                             golden_report& rep) {
  auto slurp = [](const std::filesystem::path& p) -> std::optional<std::string> {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  const auto a = slurp(fresh), b = slurp(golden);
  if (!b) {
    rep.pass = false;
    rep.diffs.push_back("missing golden: " + golden.string());
    return;
  }
  if (!a) {
    rep.pass = false;
    rep.diffs.push_back("missing output: " + fresh.string());
    return;
  }
  if (*a == *b) return;

  auto tokens = [](const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    for (char c : s) {
      if (c == ',' || c == '\n' || c == '\r' || c == ' ' || c == '\t' || c == ':' || c == '{' ||
          c == '}' || c == '[' || c == ']' || c == '"') {
        if (!tok.empty()) out.push_back(std::move(tok)), tok.clear();
      } else {
        tok += c;
      }
    }
    if (!tok.empty()) out.push_back(std::move(tok));
    return out;
  };
  const auto ta = tokens(*a), tb = tokens(*b);
  if (ta.size() != tb.size()) {
    rep.pass = false;
    rep.diffs.push_back(golden.filename().string() + ": token count " + std::to_string(ta.size()) +
                        " vs golden " + std::to_string(tb.size()));
    return;
  }
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i] == tb[i]) continue;
    char* ea = nullptr;
    char* eb = nullptr;
    const double xa = std::strtod(ta[i].c_str(), &ea);
    const double xb = std::strtod(tb[i].c_str(), &eb);
    const bool num_a = ea && *ea == '\0' && !ta[i].empty();
    const bool num_b = eb && *eb == '\0' && !tb[i].empty();
    if (num_a && num_b && std::abs(xa - xb) <= 1e-10) continue;
    rep.pass = false;
    rep.diffs.push_back(golden.filename().string() + ": token " + std::to_string(i) + " '" + ta[i] +
                        "' vs golden '" + tb[i] + "'");
    if (rep.diffs.size() > 20) return;  // enough to locate the problem
  }
}

}  // namespace detail

// Re-runs every scenario/sweep JSON found in dir and compares the fresh
// artifacts against the committed ones next to it. Scenario <stem>.json is
// expected to have its artifacts under dir itself (<stem>_trace.csv, ...).
inline golden_report verify_golden(const std::filesystem::path& dir) {
  golden_report rep;
  if (!std::filesystem::is_directory(dir)) {
    rep.pass = false;
    rep.diffs.push_back("not a directory: " + dir.string());
    return rep;
  }
  const auto work =
      std::filesystem::temp_directory_path() /
      ("peermatch_golden_" + std::to_string(::getpid()));
  std::filesystem::create_directories(work);

  std::vector<std::filesystem::path> jsons;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json" &&
        e.path().filename().string().find("_report") == std::string::npos)
      jsons.push_back(e.path());
  std::sort(jsons.begin(), jsons.end());
  if (jsons.empty()) {
    rep.pass = false;
    rep.diffs.push_back("no scenario or sweep files in " + dir.string());
  }

  for (const auto& p : jsons) {
    std::ifstream in(p);
    nlohmann::json j;
    in >> j;
    if (j.contains("parameter")) {
      auto sw = sweep_from_json(j);
      if (sw.base.name == "scenario") sw.base.name = p.stem().string();
      const auto res = run_sweep(sw, work);
      detail::compare_artifact(res.summary_csv, dir / res.summary_csv.filename(), rep);
    } else {
      auto sc = scenario_from_json(j);
      if (sc.name == "scenario") sc.name = p.stem().string();
      const auto art = run_scenario(sc, work);
      detail::compare_artifact(art.trace_csv, dir / art.trace_csv.filename(), rep);
      detail::compare_artifact(art.final_csv, dir / art.final_csv.filename(), rep);
      detail::compare_artifact(art.report_json, dir / art.report_json.filename(), rep);
    }
  }
  std::filesystem::remove_all(work);
  return rep;
}

}  // namespace peermatch
