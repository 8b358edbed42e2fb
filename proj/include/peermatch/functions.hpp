#pragma once

// Primitive curve families for agent cost, product quality and review benefit,
// plus the per-agent parameter bundle and the capability dominance test.

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace peermatch {

enum class family {
  power_cost,             // scale * e^exponent
  linear_quality,         // slope * e
  concave_power_quality,  // scale * e^exponent, exponent in (0,1]
  quadratic_benefit,      // a*r^2 + b*r
  linear_benefit,         // slope * r
};

struct function_spec {
  family kind = family::power_cost;
  double p0 = 0.0;  // scale / slope / quadratic a
  double p1 = 0.0;  // exponent / quadratic b (unused for linear families)

  static function_spec power_cost(double scale, double exponent) {
    if (!(scale > 0.0)) throw std::invalid_argument("power_cost: scale must be > 0");
    if (!(exponent > 0.0)) throw std::invalid_argument("power_cost: exponent must be > 0");
    return {family::power_cost, scale, exponent};
  }
  static function_spec linear_quality(double slope) {
    if (!(slope > 0.0)) throw std::invalid_argument("linear_quality: slope must be > 0");
    return {family::linear_quality, slope, 0.0};
  }
  static function_spec concave_power_quality(double scale, double exponent) {
    if (!(scale > 0.0)) throw std::invalid_argument("concave_power_quality: scale must be > 0");
    if (!(exponent > 0.0)) throw std::invalid_argument("concave_power_quality: exponent must be > 0");
    return {family::concave_power_quality, scale, exponent};
  }
  static function_spec quadratic_benefit(double a, double b) {
    return {family::quadratic_benefit, a, b};
  }
  static function_spec linear_benefit(double slope) {
    if (!(slope > 0.0)) throw std::invalid_argument("linear_benefit: slope must be > 0");
    return {family::linear_benefit, slope, 0.0};
  }
};

inline const char* family_name(family f) {
  switch (f) {
    case family::power_cost: return "PowerCost";
    case family::linear_quality: return "LinearQuality";
    case family::concave_power_quality: return "ConcavePowerQuality";
    case family::quadratic_benefit: return "QuadraticBenefit";
    case family::linear_benefit: return "LinearBenefit";
  }
  throw std::logic_error("family_name: unknown family");
}

inline function_spec make_function(const std::string& name, const std::vector<double>& params) {
  auto need = [&](std::size_t n) {
    if (params.size() != n)
      throw std::invalid_argument(name + ": expected " + std::to_string(n) + " parameter(s), got " +
                                  std::to_string(params.size()));
  };
  if (name == "PowerCost") { need(2); return function_spec::power_cost(params[0], params[1]); }
  if (name == "LinearQuality") { need(1); return function_spec::linear_quality(params[0]); }
  if (name == "ConcavePowerQuality") { need(2); return function_spec::concave_power_quality(params[0], params[1]); }
  if (name == "QuadraticBenefit") { need(2); return function_spec::quadratic_benefit(params[0], params[1]); }
  if (name == "LinearBenefit") { need(1); return function_spec::linear_benefit(params[0]); }
  throw std::invalid_argument("unknown function family: " + name);
}

inline std::vector<double> function_params(const function_spec& f) {
  switch (f.kind) {
    case family::power_cost:
    case family::concave_power_quality:
    case family::quadratic_benefit: return {f.p0, f.p1};
    case family::linear_quality:
    case family::linear_benefit: return {f.p0};
  }
  throw std::logic_error("function_params: unknown family");
}

inline double eval(const function_spec& f, double x) {
  switch (f.kind) {
    case family::power_cost:
    case family::concave_power_quality:
      if (x < 0.0) throw std::domain_error("eval: negative argument to a power family");
      return f.p0 * std::pow(x, f.p1);
    case family::linear_quality:
      if (x < 0.0) throw std::domain_error("eval: negative effort");
      return f.p0 * x;
    case family::quadratic_benefit:
      if (x < 0.0) throw std::domain_error("eval: negative rating");
      return f.p0 * x * x + f.p1 * x;
    case family::linear_benefit:
      if (x < 0.0) throw std::domain_error("eval: negative rating");
      return f.p0 * x;
  }
  throw std::logic_error("eval: unknown family");
}

// Exact analytic derivative. Power families with exponent < 1 diverge at 0;
// that case returns +infinity so callers can report unbounded marginals.
inline double deriv(const function_spec& f, double x) {
  switch (f.kind) {
    case family::power_cost:
    case family::concave_power_quality: {
      if (x < 0.0) throw std::domain_error("deriv: negative argument to a power family");
      const double e = f.p1;
      if (x == 0.0) {
        if (e > 1.0) return 0.0;
        if (e == 1.0) return f.p0;
        return std::numeric_limits<double>::infinity();
      }
      return f.p0 * e * std::pow(x, e - 1.0);
    }
    case family::linear_quality:
      return f.p0;
    case family::quadratic_benefit:
      if (x < 0.0) throw std::domain_error("deriv: negative rating");
      return 2.0 * f.p0 * x + f.p1;
    case family::linear_benefit:
      return f.p0;
  }
  throw std::logic_error("deriv: unknown family");
}

inline bool is_quality_family(family f) {
  return f == family::linear_quality || f == family::concave_power_quality;
}
inline bool is_benefit_family(family f) {
  return f == family::quadratic_benefit || f == family::linear_benefit;
}

// Invert a quality curve: find e with q(e) = value.
inline double inverse_quality(const function_spec& f, double value) {
  if (!is_quality_family(f.kind))
    throw std::domain_error("inverse_quality: spec is not a quality family");
  if (value < 0.0) throw std::out_of_range("inverse_quality: negative quality");
  switch (f.kind) {
    case family::linear_quality:
      return value / f.p0;
    case family::concave_power_quality:
      return std::pow(value / f.p0, 1.0 / f.p1);
    default:
      throw std::logic_error("inverse_quality: unreachable");
  }
}

struct agent_spec {
  int type_id = 0;
  double delta = 0.0;   // discount factor, [0,1)
  double alpha = 1.0;   // conjecture optimism, > 0
  double e_max = 1.0;   // effort cap, > 0
  function_spec cost;
  function_spec quality;
  function_spec benefit;
};

inline void validate_agent(const agent_spec& a) {
  if (!(a.delta >= 0.0 && a.delta < 1.0))
    throw std::invalid_argument("agent: delta must lie in [0,1)");
  if (!(a.alpha > 0.0)) throw std::invalid_argument("agent: alpha must be > 0");
  if (!(a.e_max > 0.0)) throw std::invalid_argument("agent: e_max must be > 0");
  if (a.cost.kind != family::power_cost)
    throw std::invalid_argument("agent: cost must be a PowerCost family");
  if (!is_quality_family(a.quality.kind))
    throw std::invalid_argument("agent: quality must be a quality family");
  if (!is_benefit_family(a.benefit.kind))
    throw std::invalid_argument("agent: benefit must be a benefit family");
}

// One line of the shape-assumption report. Hard failures invalidate a
// scenario; soft ones are only worth a warning (the stock benefit curve
// -r^2+2r bends down past r=1, which the model tolerates).
struct property_check {
  std::string property;
  bool pass = true;
  bool hard = true;
  std::string note;
};

struct validation_report {
  std::vector<property_check> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  bool hard_failure() const {
    for (const auto& c : checks)
      if (!c.pass && c.hard) return true;
    return false;
  }
};

// Checks the curve-shape requirements the equilibrium analysis rests on:
// costs strictly convex and flat at zero, qualities increasing and concave,
// benefits increasing and concave over the rating range in play.
inline validation_report validate_assumption1(const agent_spec& a, double rating_hi = 1.0) {
  validation_report rep;
  auto add = [&](std::string prop, bool ok, bool hard, std::string note = "") {
    rep.checks.push_back({std::move(prop), ok, hard, std::move(note)});
  };

  const auto& c = a.cost;
  add("cost value(0)=0", eval(c, 0.0) == 0.0, true);
  add("cost strictly increasing", c.p0 > 0.0, true);
  add("cost strictly convex", c.p1 > 1.0, true,
      c.p1 > 1.0 ? "" : "exponent must exceed 1");
  add("cost derivative(0)=0", deriv(c, 0.0) == 0.0, true);

  const auto& q = a.quality;
  add("quality value(0)=0", eval(q, 0.0) == 0.0, true);
  add("quality strictly increasing", q.p0 > 0.0, true);
  const bool q_concave = (q.kind == family::linear_quality) || q.p1 <= 1.0;
  add("quality concave", q_concave, true, q_concave ? "" : "exponent must not exceed 1");
  const bool q_d0_bounded = std::isfinite(deriv(q, 0.0));
  add("quality derivative(0) bounded", q_d0_bounded, false,
      q_d0_bounded ? "" : "marginal quality diverges at zero effort");

  const auto& b = a.benefit;
  add("benefit value(0)=0", eval(b, 0.0) == 0.0, true);
  const bool b_concave = (b.kind != family::quadratic_benefit) || b.p0 <= 0.0;
  add("benefit concave", b_concave, true, b_concave ? "" : "quadratic term  must be <= 0");
  bool b_incr;
  std::string b_note;
  if (b.kind == family::linear_benefit) {
    b_incr = b.p0 > 0.0;
  } else {
    // increasing on [0, rating_hi] iff the derivative at the right edge is >= 0
    b_incr = deriv(b, rating_hi) >= 0.0 && deriv(b, 0.0) > 0.0;
    if (!b_incr) b_note = "benefit bends down before rating " + std::to_string(rating_hi);
  }
  add("benefit increasing on rating domain", b_incr, false, b_note);
  const bool b_d0 = std::isfinite(deriv(b, 0.0)) && deriv(b, 0.0) > 0.0;
  add("benefit derivative(0) positive and bounded", b_d0, true);

  return rep;
}

inline std::vector<double> uniform_grid(double lo, double hi, int n) {
  if (n < 2 || !(hi > lo)) throw std::invalid_argument("uniform_grid: need n >= 2 and hi > lo");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  return g;
}

namespace detail {

// The incentive ratio delta*alpha*q'(e) / ((1-delta)*c'(e)) is 0/0 at e=0 for
// convex costs. For power families it behaves like C * e^nu near zero, so the
// boundary comparison reduces to (nu, C) lexicographic order (smaller nu wins).
struct ratio_limit {
  double nu;  // exponent of e
  double c;   // leading constant, > 0
};

inline ratio_limit incentive_ratio_limit(const agent_spec& a) {
  const double ce = a.cost.p1;
  const double qe = (a.quality.kind == family::linear_quality) ? 1.0 : a.quality.p1;
  const double q_lead = (a.quality.kind == family::linear_quality) ? a.quality.p0
                                                                   : a.quality.p0 * a.quality.p1;
  const double c_lead = a.cost.p0 * ce;
  return {qe - ce, a.delta * a.alpha * q_lead / ((1.0 - a.delta) * c_lead)};
}

inline double incentive_ratio(const agent_spec& a, double e) {
  return a.delta * a.alpha * deriv(a.quality, e) / ((1.0 - a.delta) * deriv(a.cost, e));
}

}  // namespace detail

// Pointwise dominance of agent a over agent b: incentive ratio, raw quality
// (strictly) and marginal benefit. e=0 is compared through the analytic limit
// of the ratio because both derivatives vanish there.
inline bool is_more_capable(const agent_spec& a, const agent_spec& b,
                            const std::vector<double>& effort_grid,
                            const std::vector<double>& rating_grid) {
  const double tol = 1e-12;

  const auto la = detail::incentive_ratio_limit(a);
  const auto lb = detail::incentive_ratio_limit(b);
  if (la.nu > lb.nu) return false;                       // a's ratio is smaller near 0
  if (la.nu == lb.nu && la.c < lb.c - tol) return false;

  for (double e : effort_grid) {
    if (e <= 0.0) continue;
    const double ra = detail::incentive_ratio(a, e);
    const double rb = detail::incentive_ratio(b, e);
    if (!(ra >= rb - tol * std::max(1.0, std::abs(rb)))) return false;
    if (!(eval(a.quality, e) > eval(b.quality, e))) return false;
  }
  for (double r : rating_grid) {
    if (r < 0.0) continue;
    if (!(deriv(a.benefit, r) >= deriv(b.benefit, r) - tol)) return false;
  }
  return true;
}

}  // namespace peermatch
