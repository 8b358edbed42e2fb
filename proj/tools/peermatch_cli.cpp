// Command-line front end for the simulation library. Subcommands:
//
//   run             play one scenario to rest and write its artifacts
//   sweep           rerun a base scenario across a parameter axis
//   max-mu          scan update weights for the largest one that settles
//   verify-golden   re-run committed scenarios and diff against goldens
//   check-desirable probe a matching rule's incentive properties
//
// Exit codes: 0 converged / pass, 2 oscillating, 3 iteration budget
// exhausted, 1 anything else (bad input, I/O, verification failure).

#include <cstdlib>
#include <iostream>
#include <random>
#include <set>

#include "CLI11.hpp"
#include "peermatch/scenario.hpp"

using namespace peermatch;

namespace {

int status_code(run_status s) {
  switch (s) {
    case run_status::converged: return 0;
    case run_status::oscillating: return 2;
    case run_status::max_iterations: return 3;
  }
  return 1;
}

std::filesystem::path default_out() {
  if (const char* env = std::getenv("PEERMATCH_OUT_DIR"); env && *env) return env;
  return std::filesystem::current_path();
}

void print_warnings(const scenario& sc) {
  for (const auto& w : sc.warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_run(const std::string& path, const std::string& out, const std::string& mode,
            std::uint64_t seed, bool seed_set) {
  auto sc = load_scenario(path);
  if (mode == "expected") sc.mode = step_mode::expected;
  else if (mode == "sampled") sc.mode = step_mode::sampled;
  else if (!mode.empty()) throw std::invalid_argument("--mode: expected \"expected\" or \"sampled\"");
  if (seed_set) sc.seed = seed;
  print_warnings(sc);

  const auto art = run_scenario(sc, out.empty() ? default_out() : std::filesystem::path(out));
  const auto& r = art.summary.result;
  std::cout << sc.name << ": " << run_status_name(r.status) << " after " << r.iterations
            << " slots (final step " << art.summary.result.final_l1_delta << ")\n"
            << "  quality " << art.summary.objectives.total_quality << "  welfare "
            << art.summary.objectives.total_welfare << '\n'
            << "  equilibrium checks: best-response "
            << (art.summary.ce.is_equilibrium ? "pass" : "FAIL") << ", inequalities "
            << (art.summary.stationarity.holds ? "pass" : "FAIL") << '\n';
  if (art.summary.capability_inversions >= 0)
    std::cout << "  capability order: " << art.summary.capability_inversions << " inversion(s)\n";
  std::cout << "  wrote " << art.trace_csv.string() << '\n'
            << "  wrote " << art.final_csv.string() << '\n'
            << "  wrote " << art.report_json.string() << '\n';
  return status_code(r.status);
}

int cmd_sweep(const std::string& path, const std::string& out, int jobs) {
  const auto sw = load_sweep(path);
  print_warnings(sw.base);
  const auto res = run_sweep(sw, out.empty() ? default_out() : std::filesystem::path(out), jobs);

  int code = 0;
  for (const auto& c : res.cells) {
    std::cout << sw.parameter << " = " << c.value[0];
    if (c.value.size() > 1) std::cout << ", " << c.value[1];
    std::cout << ": " << run_status_name(c.status) << " (" << c.iterations << " slots)"
              << "  quality " << c.objectives.total_quality << "  welfare "
              << c.objectives.total_welfare;
    if (c.quality_argmax) std::cout << "  <- best quality";
    if (c.welfare_argmax) std::cout << "  <- best welfare";
    std::cout << '\n';
    if (code == 0 && c.status != run_status::converged) code = status_code(c.status);
  }
  std::cout << "wrote " << res.summary_csv.string() << '\n';
  return code;
}

int cmd_max_mu(const std::string& path, double lo, double hi, double res) {
  const auto sc = load_scenario(path);
  print_warnings(sc);
  const auto pop = build_population(sc);
  run_options base;
  base.max_iterations = sc.max_iterations;
  base.tol = sc.tol;
  base.mode = sc.mode;
  base.seed = sc.seed;
  const auto scan = find_max_step_size(pop, sc.rule, lo, hi, res, base);
  for (const auto& e : scan.entries)
    std::cout << "mu = " << e.mu << ": " << run_status_name(e.status) << " (" << e.iterations
              << " slots)\n";
  if (scan.any_converged) {
    std::cout << "largest settling step size on the grid: " << scan.max_converging_mu << '\n';
    return 0;
  }
  std::cout << "no step size on the grid settled\n";
  return 3;
}

int cmd_verify_golden(const std::string& dir) {
  const auto rep = verify_golden(dir);
  if (rep.pass) {
    std::cout << "golden artifacts match\n";
    return 0;
  }
  for (const auto& d : rep.diffs) std::cout << "mismatch: " << d << '\n';
  return 1;
}

int cmd_check_desirable(const std::string& path, int n_samples, std::uint64_t seed) {
  const auto sc = load_scenario(path);
  double rating_hi = 0.0;
  for (const auto& a : sc.types) rating_hi = std::max(rating_hi, eval(a.quality, a.e_max));

  // The desirability concept presumes the benefit itself still rewards a
  // better match: past its peak a decreasing benefit makes every rule look
  // bad. Cap the sampled ratings where the benefit stops increasing.
  const auto& ben = sc.types.front().benefit;
  if (ben.kind == family::quadratic_benefit && ben.p0 < 0.0)
    rating_hi = std::min(rating_hi, -ben.p1 / (2.0 * ben.p0));

  // Random rating landscapes: a handful of distinct descending values with
  // small per-value head-counts. Two or more agents per value, so every
  // sampled market satisfies the more-than-one-of-each-type premise the
  // load guarantees rest on; a lone bottom agent would go unreviewed.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> k_of(2, 8), head(2, 5);
  std::uniform_real_distribution<double> val(rating_hi * 1e-3, rating_hi);
  std::vector<rating_distribution> samples;
  for (int s = 0; s < n_samples; ++s) {
    std::set<double, std::greater<double>> vals;
    const int k = k_of(rng);
    while (static_cast<int>(vals.size()) < k) vals.insert(val(rng));
    rating_distribution d;
    d.values.assign(vals.begin(), vals.end());
    for (int i = 0; i < k; ++i) {
      d.counts.push_back(head(rng));
      d.total += d.counts.back();
    }
    samples.push_back(std::move(d));
  }

  const auto rep = check_desirable(sc.rule, samples, sc.types.front().benefit);
  auto line = [](const char* what, bool ok) {
    std::cout << "  " << what << ": " << (ok ? "pass" : "FAIL") << '\n';
  };
  std::cout << rule_name(sc.rule.kind) << " on " << n_samples << " sampled distributions:\n";
  line("conjectured benefit nondecreasing", rep.nondecreasing);
  line("conjectured benefit concave", rep.concave);
  line("conjectured benefit strictly increasing somewhere", rep.strictly_increasing);
  line("review load uniform", rep.load_uniform);
  line("review load positive", rep.load_positive);
  for (std::size_t i = 0; i < rep.violations.size() && i < 5; ++i)
    std::cout << "  first violations: " << rep.violations[i] << '\n';
  return rep.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rating-based peer review matching: simulate, sweep, verify"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir, mode;
  std::uint64_t seed = 0;
  int jobs = 1, n_samples = 100;
  double lo = 0.0, hi = 0.0, res = 0.0;

  auto* run = app.add_subcommand("run", "play one scenario and write artifacts");
  run->add_option("scenario", scenario_path, "scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (default: $PEERMATCH_OUT_DIR or cwd)");
  run->add_option("--mode", mode, "override the update mode: expected | sampled");
  auto* seed_opt = run->add_option("--seed", seed, "override the sampling seed");

  auto* sweep = app.add_subcommand("sweep", "rerun a base scenario across a parameter axis");
  sweep->add_option("sweep", scenario_path, "sweep JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "output directory (default: $PEERMATCH_OUT_DIR or cwd)");
  sweep->add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);

  auto* maxmu = app.add_subcommand("max-mu", "largest update weight that still settles");
  maxmu->add_option("scenario", scenario_path, "scenario JSON")->required()->check(CLI::ExistingFile);
  maxmu->add_option("--lo", lo, "grid start")->required();
  maxmu->add_option("--hi", hi, "grid end")->required();
  maxmu->add_option("--res", res, "grid resolution")->required();

  auto* golden = app.add_subcommand("verify-golden", "re-run scenarios, diff against goldens");
  golden->add_option("dir", scenario_path, "directory of scenario JSONs and goldens")
      ->required()
      ->check(CLI::ExistingDirectory);

  auto* desir = app.add_subcommand("check-desirable", "probe a rule's incentive properties");
  desir->add_option("scenario", scenario_path, "scenario JSON")->required()->check(CLI::ExistingFile);
  desir->add_option("--samples", n_samples, "sampled distributions")->check(CLI::PositiveNumber);
  desir->add_option("--seed", seed, "sampling seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, out_dir, mode, seed, seed_opt->count() > 0);
    if (sweep->parsed()) return cmd_sweep(scenario_path, out_dir, jobs);
    if (maxmu->parsed()) return cmd_max_mu(scenario_path, lo, hi, res);
    if (golden->parsed()) return cmd_verify_golden(scenario_path);
    if (desir->parsed()) return cmd_check_desirable(scenario_path, n_samples, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
