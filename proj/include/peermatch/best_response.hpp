#pragma once

// Per-slot effort choice: maximize the conjectured payoff
//   -(1-delta)*M*c(e) + delta*alpha*B((1-mu)*theta + mu*q(e))
// over e in [0, e_max]. B is piecewise affine in the prospective rating with
// breakpoints wherever it ties an others' rating, so the maximizer is found
// by enumerating tie efforts, solving the smooth first-order condition on
// each open segment, and comparing candidates. A uniform-grid argmax serves
// as the verification oracle, and the low-rating trap threshold lives here
// because it is a statement about this objective's gradient.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "peermatch/matching.hpp"

namespace peermatch {

// The e-dependent part of the conjectured payoff; the current-benefit and
// beta terms are constants in e and stay out.
inline double br_objective(const agent_spec& a, double theta, const rating_distribution& others,
                           const matching_rule_spec& rule, double mu, double e, double M = 1.0) {
  const double x = (1.0 - mu) * theta + mu * eval(a.quality, e);
  return -(1.0 - a.delta) * M * eval(a.cost, e) +
         a.delta * a.alpha * conjectured_benefit_direct(a, x, others, rule);
}

enum class br_position { lower_bound, interior, breakpoint, upper_bound };

struct best_response_result {
  double effort = 0.0;
  double value = 0.0;         // objective at the optimum
  double foc_residual = 0.0;  // |g'| when interior, optimality slack otherwise
  br_position position = br_position::lower_bound;
  std::string segment;  // human-readable locator of the winning candidate
};

namespace detail {

// objective derivative restricted to a segment where B has slope s
inline double seg_deriv(const agent_spec& a, double mu, double M, double s, double e) {
  const double benefit_term = s == 0.0 ? 0.0 : a.delta * a.alpha * mu * s * deriv(a.quality, e);
  return -(1.0 - a.delta) * M * deriv(a.cost, e) + benefit_term;
}

// bisection fallback for families without a closed-form root; seg_deriv is
// non-increasing in e, so plain sign bisection to 1e-12 suffices
inline double foc_bisect(const agent_spec& a, double mu, double M, double s, double lo, double hi) {
  if (seg_deriv(a, mu, M, s, lo) <= 0.0) return lo;
  if (seg_deriv(a, mu, M, s, hi) >= 0.0) return hi;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (seg_deriv(a, mu, M, s, mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// unconstrained root of seg_deriv = 0; nullopt when the derivative never
// crosses zero from above (s <= 0, or no cost to balance)
inline std::optional<double> foc_root(const agent_spec& a, double mu, double M, double s,
                                      double lo, double hi) {
  if (!(s > 0.0)) return std::nullopt;  // benefit flat or falling: cost decides
  const double k = a.delta * a.alpha * mu * s;
  const double c = (1.0 - a.delta) * M * a.cost.p0 * a.cost.p1;
  if (!(c > 0.0)) return std::nullopt;  // no marginal cost: payoff increasing
  const double ce = a.cost.p1;
  const double qe = a.quality.kind == family::linear_quality ? 1.0 : a.quality.p1;
  const double q_lead =
      a.quality.kind == family::linear_quality ? a.quality.p0 : a.quality.p0 * a.quality.p1;
  if (ce - qe > 0.0) {
    const double root = std::pow(k * q_lead / c, 1.0 / (ce - qe));
    if (std::isfinite(root)) return root;
  }
  return foc_bisect(a, mu, M, s, lo, hi);
}

}  // namespace detail

// Exact maximizer of br_objective via breakpoint enumeration and per-segment
// first-order conditions. M is the conjectured review load (the paper's
// analysis holds it at 1 for desirable rules).
inline best_response_result best_response(const agent_spec& a, double theta,
                                          const rating_distribution& others,
                                          const matching_rule_spec& rule, double mu,
                                          double M = 1.0) {
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("best_response: mu outside (0,1)");
  if (!(theta >= 0.0) || !std::isfinite(theta))
    throw std::invalid_argument("best_response: rating outside domain");
  if (!(M >= 0.0)) throw std::invalid_argument("best_response: negative review load");

  const double e_max = a.e_max;
  const double x0 = (1.0 - mu) * theta;
  const double q_top = eval(a.quality, e_max);

  // segment edges in effort space, each carrying its exact prospective rating
  struct edge {
    double e;
    double x;
    bool tie;  // lands exactly on an others' rating
  };
  std::vector<edge> edges;
  edges.push_back({0.0, x0, false});
  for (double v : others.values) {
    const double need = (v - x0) / mu;  // quality required to tie v
    if (need < 0.0 || need > q_top) continue;
    double e = need == 0.0 ? 0.0 : inverse_quality(a.quality, need);
    e = std::min(std::max(e, 0.0), e_max);
    edges.push_back({e, v, true});
  }
  edges.push_back({e_max, x0 + mu * q_top, false});
  std::sort(edges.begin(), edges.end(), [](const edge& p, const edge& q) { return p.e < q.e; });
  // merge coincident edges; a tie marker wins so envelope values are kept
  std::vector<edge> merged;
  for (const auto& ed : edges) {
    if (!merged.empty() && std::abs(ed.e - merged.back().e) <= 1e-12)
      merged.back().tie = merged.back().tie || ed.tie;
    else
      merged.push_back(ed);
  }

  struct seg {
    double lo, hi;  // effort bounds
    double slope;   // dB/dx on the open segment
  };
  std::vector<seg> segs;
  for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
    // slope of the benefit curve just above the segment's lower x-edge
    const double s =
        conjectured_benefit_slope(a, others, rule, merged[i].x, curve_side::above);
    segs.push_back({merged[i].e, merged[i + 1].e, s});
  }

  struct cand {
    double e;
    double val;
    br_position pos;
    int seg_idx;  // containing/adjacent segment for diagnostics
  };
  std::vector<cand> cands;

  const double cost_scale = (1.0 - a.delta) * M;
  auto envelope_value = [&](const edge& ed) {
    // breakpoint candidates carry the best of the tie value and the
    // reachable one-sided limits: the supremum a surrounding grid refines
    // to. A side is reachable only if effort can actually move there.
    double b = conjectured_benefit_direct(a, ed.x, others, rule);
    if (ed.tie) {
      if (ed.e > 0.0)
        b = std::max(b, conjectured_benefit_limit(a, others, rule, ed.x, curve_side::below));
      if (ed.e < e_max)
        b = std::max(b, conjectured_benefit_limit(a, others, rule, ed.x, curve_side::above));
    }
    return -cost_scale * eval(a.cost, ed.e) + a.delta * a.alpha * b;
  };

  for (std::size_t i = 0; i < merged.size(); ++i) {
    const br_position pos = i == 0                  ? br_position::lower_bound
                            : i + 1 == merged.size() ? br_position::upper_bound
                                                     : br_position::breakpoint;
    cands.push_back({merged[i].e, envelope_value(merged[i]), pos, static_cast<int>(i)});
  }
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto root = detail::foc_root(a, mu, M, segs[i].slope, segs[i].lo, segs[i].hi);
    if (!root) continue;
    const double e = *root;
    if (e <= segs[i].lo || e >= segs[i].hi) continue;  // boundary candidates cover the rest
    cands.push_back({e, br_objective(a, theta, others, rule, mu, e, M), br_position::interior,
                     static_cast<int>(i)});
  }

  std::sort(cands.begin(), cands.end(), [](const cand& p, const cand& q) { return p.e < q.e; });
  const cand* best = &cands.front();
  for (const auto& c : cands)
    if (c.val > best->val) best = &c;  // ties keep the smallest effort

  best_response_result out;
  out.effort = best->e;
  out.value = best->val;
  out.position = best->pos;

  auto slope_left_of = [&](double e) -> std::optional<double> {
    for (int i = static_cast<int>(segs.size()) - 1; i >= 0; --i)
      if (segs[i].lo < e && e <= segs[i].hi) return segs[i].slope;
    return std::nullopt;
  };
  auto slope_right_of = [&](double e) -> std::optional<double> {
    for (const auto& sg : segs)
      if (sg.lo <= e && e < sg.hi) return sg.slope;
    return std::nullopt;
  };

  switch (best->pos) {
    case br_position::interior: {
      out.foc_residual = std::abs(detail::seg_deriv(a, mu, M, segs[best->seg_idx].slope, best->e));
      out.segment = "interior of segment " + std::to_string(best->seg_idx);
      break;
    }
    case br_position::breakpoint: {
      const auto l = slope_left_of(best->e);
      const auto r = slope_right_of(best->e);
      const double dl = l ? detail::seg_deriv(a, mu, M, *l, best->e) : 0.0;
      const double dr = r ? detail::seg_deriv(a, mu, M, *r, best->e) : 0.0;
      out.foc_residual = std::max(std::max(0.0, -dl), std::max(0.0, dr));
      out.segment = "tie with others' rating at x=" + std::to_string(merged[best->seg_idx].x);
      break;
    }
    case br_position::lower_bound: {
      const auto r = slope_right_of(best->e);
      out.foc_residual = r ? std::max(0.0, detail::seg_deriv(a, mu, M, *r, best->e)) : 0.0;
      out.segment = "lower bound";
      break;
    }
    case br_position::upper_bound: {
      const auto l = slope_left_of(best->e);
      out.foc_residual = l ? std::max(0.0, -detail::seg_deriv(a, mu, M, *l, best->e)) : 0.0;
      out.segment = "upper bound";
      break;
    }
  }
  return out;
}

// Uniform-grid argmax of the same objective; ties go to the smallest effort.
inline double brute_force_best_response(const agent_spec& a, double theta,
                                        const rating_distribution& others,
                                        const matching_rule_spec& rule, double mu, double M,
                                        long grid_n) {
  if (grid_n < 1) throw std::invalid_argument("brute_force_best_response: empty grid");
  double best_e = 0.0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (long i = 0; i <= grid_n; ++i) {
    const double e = a.e_max * static_cast<double>(i) / static_cast<double>(grid_n);
    const double v = br_objective(a, theta, others, rule, mu, e, M);
    if (v > best_v) {
      best_v = v;
      best_e = e;
    }
  }
  return best_e;
}

// Gradient of the uniform-start stay-put objective at rating theta: positive
// means climbing to the common rating is worth the cost, so a population
// started at or below the root never moves.
inline double trap_gradient(const agent_spec& a, double mu, double theta) {
  if (!(theta > 0.0)) throw std::domain_error("trap_gradient: rating must be positive");
  const double e = inverse_quality(a.quality, theta);
  const double ramp = eval(a.benefit, theta) / theta;
  return -(1.0 - a.delta) * deriv(a.cost, e) +
         a.delta * a.alpha * mu * deriv(a.quality, e) * ramp;
}

namespace detail {

inline double threshold_bisect(const agent_spec& a, double mu) {
  const double cap = eval(a.quality, a.e_max);
  if (trap_gradient(a, mu, cap) >= 0.0) return cap;  // trapped across the whole range
  double lo = cap * 1e-9;
  while (trap_gradient(a, mu, lo) <= 0.0) {
    lo *= 0.5;
    if (lo < 1e-300)
      throw std::invalid_argument("low_rating_threshold: gradient not positive near zero");
  }
  double hi = cap;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (trap_gradient(a, mu, mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Largest uniform initial rating at or below which this agent would keep the
// population's rating frozen forever (the low-rating trap). Closed form for
// quadratic cost + linear quality + quadratic benefit, bisection otherwise;
// capped at the reachable quality q(e_max).
inline double low_rating_threshold_agent(const agent_spec& a, double mu) {
  if (!(mu > 0.0 && mu < 1.0))
    throw std::invalid_argument("low_rating_threshold: mu outside (0,1)");
  if (!(deriv(a.benefit, 0.0) > 0.0))
    throw std::invalid_argument("low_rating_threshold: no benefit incentive at zero rating");
  const double cap = eval(a.quality, a.e_max);
  if (a.cost.kind == family::power_cost && a.cost.p1 == 2.0 &&
      a.quality.kind == family::linear_quality && a.benefit.kind == family::quadratic_benefit) {
    const double cs = a.cost.p0, p = a.quality.p0;
    const double qa = a.benefit.p0, qb = a.benefit.p1;
    const double num = a.delta * a.alpha * mu * p * p * qb;
    const double den = 2.0 * cs * (1.0 - a.delta) - a.delta * a.alpha * mu * p * p * qa;
    if (den > 0.0 && num / den <= cap) return num / den;
    return cap;
  }
  return detail::threshold_bisect(a, mu);
}

inline std::vector<double> low_rating_threshold_each(const std::vector<agent_spec>& agents,
                                                     double mu) {
  std::vector<double> t;
  t.reserve(agents.size());
  for (const auto& a : agents) t.push_back(low_rating_threshold_agent(a, mu));
  return t;
}

// Population trap threshold: the max over agents — the highest rating any
// type can hold from a uniform start. Each agent honors only its own
// threshold, so a uniform start freezes the whole population only at or
// below the smallest one; between the two extremes the weaker types sink.
inline double low_rating_threshold(const std::vector<agent_spec>& agents, double mu) {
  if (agents.empty()) throw std::invalid_argument("low_rating_threshold: empty population");
  const auto each = low_rating_threshold_each(agents, mu);
  return *std::max_element(each.begin(), each.end());
}

}  // namespace peermatch
