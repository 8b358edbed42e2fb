#pragma once

// Repeated play of the review game. Each slot every agent best-responds to
// the standing rating distribution, papers are matched and reviewed, ratings
// absorb the produced qualities, and the conjecture intercepts roll forward.
// The equilibrium checkers and designer-facing diagnostics that the
// convergence experiments rely on live here too.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "peermatch/best_response.hpp"

namespace peermatch {

struct population {
  std::vector<agent_spec> agents;
  rating_profile ratings;  // initial ratings, one per agent
};

// Expand per-type specs and head-counts into a flat population (agents are
// laid out type by type, so slices stay contiguous).
inline population make_population(const std::vector<agent_spec>& types,
                                  const std::vector<int>& counts,
                                  const std::vector<double>& theta0) {
  if (types.size() != counts.size() || types.size() != theta0.size())
    throw std::invalid_argument("make_population: mismatched per-type arrays");
  if (types.empty()) throw std::invalid_argument("make_population: no types");
  population p;
  std::vector<double> init;
  for (std::size_t k = 0; k < types.size(); ++k) {
    if (counts[k] <= 0) throw std::invalid_argument("make_population: nonpositive head-count");
    validate_agent(types[k]);
    for (int c = 0; c < counts[k]; ++c) {
      p.agents.push_back(types[k]);
      init.push_back(theta0[k]);
    }
  }
  p.ratings = rating_profile(init);
  return p;
}

enum class step_mode { expected, sampled };

namespace detail {

// Agents with identical behavioral parameters act identically at identical
// ratings, so best responses are solved once per (group, rating) pair. The
// type label is ignored on purpose: it names, it does not change behavior.
inline bool same_behavior(const agent_spec& x, const agent_spec& y) {
  auto eq = [](const function_spec& f, const function_spec& g) {
    return f.kind == g.kind && f.p0 == g.p0 && f.p1 == g.p1;
  };
  return x.delta == y.delta && x.alpha == y.alpha && x.e_max == y.e_max && eq(x.cost, y.cost) &&
         eq(x.quality, y.quality) && eq(x.benefit, y.benefit);
}

inline std::vector<int> behavior_groups(const std::vector<agent_spec>& agents) {
  std::vector<int> group(agents.size(), -1);
  std::vector<std::size_t> reps;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t g = 0; g < reps.size(); ++g) {
      if (same_behavior(agents[i], agents[reps[g]])) {
        group[i] = static_cast<int>(g);
        break;
      }
    }
    if (group[i] < 0) {
      group[i] = static_cast<int>(reps.size());
      reps.push_back(i);
    }
  }
  return group;
}

inline std::uint64_t profile_hash(const std::vector<double>& v) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the raw bit patterns
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    h ^= bits;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t slot_seed(std::uint64_t seed, long t) {
  return seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(t + 1));
}

// Bounded history of (l1 step size, profile) pairs backing the oscillation
// classifier. A revisit counts only once the window is full, the step sizes
// show no shrinkage across it (newest >= oldest, all above 10x tolerance),
// and the candidate profile sits within tolerance of a recorded one.
struct revisit_window {
  std::size_t cap = 200;
  std::deque<std::pair<double, std::vector<double>>> entries;

  void push(double delta, const std::vector<double>& profile) {
    entries.emplace_back(delta, profile);
    if (entries.size() > cap) entries.pop_front();
  }

  // Distance (in steps) back to the matched profile, or 0 for no match.
  long match(const std::vector<double>& profile, double delta, double tol) const {
    if (entries.size() < cap || delta < entries.front().first) return 0;
    if (delta <= 10.0 * tol) return 0;
    for (const auto& [d, _] : entries)
      if (d <= 10.0 * tol) return 0;
    for (std::size_t j = entries.size(); j-- > 0;) {  // newest first: tightest period
      double dist = 0.0;
      const auto& past = entries[j].second;
      for (std::size_t i = 0; i < past.size() && dist < tol; ++i)
        dist += std::abs(profile[i] - past[i]);
      if (dist < tol) return static_cast<long>(entries.size() - j);
    }
    return 0;
  }
};

}  // namespace detail

// Everything one slot produces.
struct step_result {
  std::vector<double> efforts;      // chosen this slot
  std::vector<double> payoffs;      // realized slot payoff u_i
  std::vector<double> betas_next;   // conjecture intercepts rolled forward
  std::vector<char> reviewed;       // whether the rating absorbed this slot
  rating_profile ratings_next;
  double l1_delta = 0.0;
};

namespace detail {

inline step_result step_impl(const population& pop, const std::vector<int>& groups,
                             const rating_profile& cur, const matching_rule_spec& rule, double mu,
                             step_mode mode, std::uint64_t seed) {
  const std::size_t n = pop.agents.size();
  const auto d = distribution(cur);

  // per-(group, rating) solve: effort, conjectured benefit at the
  // prospective rating, and in expected mode the slot's matching terms
  struct solved {
    double effort;
    double bbar;
    double exp_benefit;
    double exp_load;
    double review_mass;
  };
  std::map<std::pair<int, double>, solved> cache;
  std::map<double, rating_distribution> others_by_value;

  std::vector<double> efforts(n);
  step_result out;
  out.reviewed.assign(n, 0);

  assignment asg;
  if (mode == step_mode::sampled) asg = sample_assignment(rule, cur, seed);

  for (std::size_t i = 0; i < n; ++i) {
    const agent_spec& a = pop.agents[i];
    const double theta = cur[i];
    const auto key = std::make_pair(groups[i], theta);
    auto it = cache.find(key);
    if (it == cache.end()) {
      const int k = d.rank_of(theta);
      auto ot = others_by_value.find(theta);
      if (ot == others_by_value.end())
        ot = others_by_value.emplace(theta, remove_one(d, k)).first;
      const auto& others = ot->second;
      const auto br = best_response(a, theta, others, rule, mu);
      solved s;
      s.effort = br.effort;
      const double x = (1.0 - mu) * theta + mu * eval(a.quality, br.effort);
      s.bbar = conjectured_benefit_direct(a, x, others, rule);
      if (mode == step_mode::expected) {
        s.exp_benefit = expected_benefit_at(a, rule, d, k);
        s.exp_load = expected_review_load(rule, d, k);
        s.review_mass = match_probabilities(rule, d, k).total();
      } else {
        s.exp_benefit = s.exp_load = s.review_mass = 0.0;
      }
      it = cache.emplace(key, s).first;
    }
    efforts[i] = it->second.effort;
  }

  std::vector<double> next(cur.ratings);
  std::vector<double> payoffs(n), betas(n);
  double delta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const agent_spec& a = pop.agents[i];
    const double theta = cur[i];
    const auto& s = cache.at(std::make_pair(groups[i], theta));
    bool reviewed;
    double u;
    if (mode == step_mode::expected) {
      reviewed = s.review_mass >= 1.0 - 1e-9;
      u = s.exp_benefit - s.exp_load * eval(a.cost, efforts[i]);
    } else {
      const int rev = asg.reviewer_of[static_cast<int>(i)];
      reviewed = rev >= 0;
      const double gain =
          reviewed ? eval(a.benefit, eval(pop.agents[rev].quality, efforts[rev])) : 0.0;
      u = gain - static_cast<double>(asg.review_load[i]) * eval(a.cost, efforts[i]);
    }
    if (reviewed) {
      next[i] = quantize_rating((1.0 - mu) * theta + mu * eval(a.quality, efforts[i]));
      out.reviewed[i] = 1;
    }
    payoffs[i] = u;
    betas[i] = u - a.alpha * s.bbar;
    delta += std::abs(next[i] - theta);
  }

  out.efforts = std::move(efforts);
  out.payoffs = std::move(payoffs);
  out.betas_next = std::move(betas);
  out.ratings_next = rating_profile(std::move(next));
  out.l1_delta = delta;
  return out;
}

}  // namespace detail

inline step_result step(const population& pop, const rating_profile& cur,
                        const matching_rule_spec& rule, double mu,
                        step_mode mode = step_mode::expected, std::uint64_t seed = 0) {
  if (pop.agents.size() != cur.size())
    throw std::invalid_argument("step: ratings do not cover the population");
  return detail::step_impl(pop, detail::behavior_groups(pop.agents), cur, rule, mu, mode, seed);
}

// What a per-slot observer sees: the slot's entering ratings and the
// quantities the slot produced.
struct step_view {
  long t = 0;
  const std::vector<double>& ratings;
  const std::vector<double>& efforts;
  const std::vector<double>& payoffs;
  const std::vector<double>& next_ratings;
  double l1_delta = 0.0;
  double rho = 0.0;  // contraction ratio against the previous slot's delta
};

enum class run_status { converged, oscillating, max_iterations };

inline const char* run_status_name(run_status s) {
  switch (s) {
    case run_status::converged: return "converged";
    case run_status::oscillating: return "oscillating";
    case run_status::max_iterations: return "max_iterations";
  }
  return "unknown";
}

struct run_options {
  long max_iterations = 10000;
  double tol = 1e-8;           // l1 movement below this counts toward convergence
  int confirm_steps = 10;      // consecutive quiet slots required
  step_mode mode = step_mode::expected;
  std::uint64_t seed = 0;      // sampled mode only
  bool detect_cycles = true;   // revisited rating profiles end the run early
  int oscillation_window = 200;  // history length for the revisit heuristic
  std::function<void(const step_view&)> observer;
};

struct run_result {
  run_status status = run_status::max_iterations;
  long iterations = 0;    // slots actually played
  long cycle_length = 0;  // when a revisit was detected
  rating_profile ratings;
  std::vector<double> efforts;  // from the last slot
  std::vector<double> payoffs;
  std::vector<double> betas;
  double final_l1_delta = 0.0;
  double max_rho = 0.0;  // largest contraction ratio seen after the first slot
};

inline run_result run_dynamics(const population& pop, const matching_rule_spec& rule, double mu,
                               const run_options& opts = {}) {
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("run_dynamics: mu outside (0,1)");
  if (pop.agents.empty()) throw std::invalid_argument("run_dynamics: empty population");
  if (pop.agents.size() != pop.ratings.size())
    throw std::invalid_argument("run_dynamics: ratings do not cover the population");
  if (opts.max_iterations < 1) throw std::invalid_argument("run_dynamics: no iterations");

  const auto groups = detail::behavior_groups(pop.agents);
  rating_profile cur = pop.ratings;
  std::unordered_map<std::uint64_t, long> seen;
  seen.emplace(detail::profile_hash(cur.ratings), 0);

  // Cycling is a classification heuristic, not a theorem: a run is called
  // oscillating only when the step size has stopped shrinking across a full
  // window while staying well above tolerance AND the profile comes back to
  // (within tolerance of) a state it already visited.
  detail::revisit_window recent;
  recent.cap = static_cast<std::size_t>(std::max(opts.oscillation_window, 2));

  run_result out;
  double prev_delta = -1.0;
  int quiet = 0;
  for (long t = 0; t < opts.max_iterations; ++t) {
    auto sr = detail::step_impl(pop, groups, cur, rule, mu, opts.mode,
                                detail::slot_seed(opts.seed, t));
    const double rho = prev_delta > 0.0 ? sr.l1_delta / prev_delta : 0.0;
    if (t > 1) out.max_rho = std::max(out.max_rho, rho);  // the t=1 ratio reflects the start
    if (opts.observer)
      opts.observer(step_view{t, cur.ratings, sr.efforts, sr.payoffs, sr.ratings_next.ratings,
                              sr.l1_delta, rho});
    cur = std::move(sr.ratings_next);
    out.efforts = std::move(sr.efforts);
    out.payoffs = std::move(sr.payoffs);
    out.betas = std::move(sr.betas_next);
    out.final_l1_delta = sr.l1_delta;
    out.iterations = t + 1;
    prev_delta = sr.l1_delta;

    if (sr.l1_delta <= opts.tol) {
      if (++quiet >= opts.confirm_steps) {
        out.status = run_status::converged;
        break;
      }
    } else {
      quiet = 0;
    }
    if (opts.detect_cycles) {
      // Fast path: a bit-exact revisit of a still-moving profile is a cycle
      // (quantized ratings make true cycles land on identical states).
      const auto h = detail::profile_hash(cur.ratings);
      const auto [it, fresh] = seen.emplace(h, t + 1);
      if (!fresh && sr.l1_delta > opts.tol) {
        out.status = run_status::oscillating;
        out.cycle_length = (t + 1) - it->second;
        break;
      }

      // Windowed path: no shrinkage across the whole window, every step in it
      // still large, and the profile has come back near a recorded state.
      if (const long back = recent.match(cur.ratings, sr.l1_delta, opts.tol); back > 0) {
        out.status = run_status::oscillating;
        out.cycle_length = back;
        break;
      }
      recent.push(sr.l1_delta, cur.ratings);
    }
  }
  out.ratings = std::move(cur);
  return out;
}

// ---- equilibrium checks ----------------------------------------------

struct ce_agent_check {
  int agent = 0;
  double rating_residual = 0.0;  // |q(best response) - rating|
  double foc_residual = 0.0;
};

struct ce_report {
  bool is_equilibrium = true;
  double max_rating_residual = 0.0;
  std::vector<ce_agent_check> failures;
};

// A rating profile is a conjectural-equilibrium rest point when every
// agent's best response reproduces exactly the quality its rating records.
inline ce_report verify_ce(const population& pop, const rating_profile& ratings,
                           const matching_rule_spec& rule, double mu, double tol = 1e-8) {
  if (pop.agents.size() != ratings.size())
    throw std::invalid_argument("verify_ce: ratings do not cover the population");
  const auto d = distribution(ratings);
  const auto groups = detail::behavior_groups(pop.agents);
  std::map<std::pair<int, double>, std::pair<double, double>> cache;
  std::map<double, rating_distribution> others_by_value;

  ce_report rep;
  for (std::size_t i = 0; i < pop.agents.size(); ++i) {
    const double theta = ratings[i];
    const auto key = std::make_pair(groups[i], theta);
    auto it = cache.find(key);
    if (it == cache.end()) {
      auto ot = others_by_value.find(theta);
      if (ot == others_by_value.end())
        ot = others_by_value.emplace(theta, remove_one(d, d.rank_of(theta))).first;
      const auto br = best_response(pop.agents[i], theta, ot->second, rule, mu);
      const double resid = std::abs(eval(pop.agents[i].quality, br.effort) - theta);
      it = cache.emplace(key, std::make_pair(resid, br.foc_residual)).first;
    }
    rep.max_rating_residual = std::max(rep.max_rating_residual, it->second.first);
    if (it->second.first > tol) {
      rep.is_equilibrium = false;
      rep.failures.push_back({static_cast<int>(i), it->second.first, it->second.second});
    }
  }
  return rep;
}

struct stationarity_report {
  bool holds = true;
  double max_violation = 0.0;
  std::vector<int> violators;
};

// Solver-free counterpart of verify_ce. The profile pins each agent's effort
// through its rating (theta = q(e)), so staying put prospects rating theta and
// every deviation lands on the piecewise-affine benefit curve over the others'
// ratings. Where the curve is continuous the rest conditions are the usual
// one-sided marginal inequalities
//   (1-delta) c'(e) <= delta*alpha*mu*q'(e) * slope_below   (no gain backing off)
//   (1-delta) c'(e) >= delta*alpha*mu*q'(e) * slope_above   (no gain pushing on)
// but at a tie the curve can jump, and a rest point there is held by the jump
// while the slopes alone read as a violation. The test therefore compares
// payoffs directly: stay-put against every reachable tie value, both effort
// bounds, and each open segment's stationary point (where the marginal
// conditions cross). A violation is the best payoff improvement a deviation
// realizes; the default margin sits above the slack a tolerance-converged run
// legitimately carries and far below a genuine deviation's gain.
inline stationarity_report check_equilibrium_inequalities(const population& pop,
                                                          const rating_profile& ratings,
                                                          const matching_rule_spec& rule,
                                                          double mu, double margin = 1e-6) {
  if (pop.agents.size() != ratings.size())
    throw std::invalid_argument("check_equilibrium_inequalities: ratings mismatch");
  const auto d = distribution(ratings);
  const auto groups = detail::behavior_groups(pop.agents);
  std::map<std::pair<int, double>, double> cache;  // (group, rating) -> violation
  std::map<double, rating_distribution> others_by_value;

  stationarity_report rep;
  for (std::size_t i = 0; i < pop.agents.size(); ++i) {
    const agent_spec& a = pop.agents[i];
    const double theta = ratings[i];
    const auto key = std::make_pair(groups[i], theta);
    auto it = cache.find(key);
    if (it == cache.end()) {
      auto ot = others_by_value.find(theta);
      if (ot == others_by_value.end())
        ot = others_by_value.emplace(theta, remove_one(d, d.rank_of(theta))).first;
      const auto& others = ot->second;

      double viol = 0.0;
      const double e = theta == 0.0 ? 0.0 : inverse_quality(a.quality, theta);
      if (e > a.e_max * (1.0 + 1e-12)) {
        viol = e - a.e_max;  // the rating records a quality this agent cannot produce
      } else {
        const double cost_scale = (1.0 - a.delta);
        const double q_top = eval(a.quality, a.e_max);
        // payoff of producing effort eff when the benefit resolves to bval
        auto pay = [&](double eff, double bval) {
          return -cost_scale * eval(a.cost, eff) + a.delta * a.alpha * bval;
        };
        // at a tie the curve value and the reachable one-sided limits all
        // bound deviations that stop just short; take the supremum
        auto envelope = [&](double x, double eff) {
          double b = conjectured_benefit_direct(a, x, others, rule);
          if (eff > 0.0)
            b = std::max(b, conjectured_benefit_limit(a, others, rule, x, curve_side::below));
          if (eff < a.e_max)
            b = std::max(b, conjectured_benefit_limit(a, others, rule, x, curve_side::above));
          return b;
        };
        const double stay = pay(e, envelope(theta, e));

        // deviation candidates: effort bounds and every reachable tie, each
        // an edge of a segment on which the curve is a single chord
        struct edge {
          double e;
          double x;
        };
        std::vector<edge> edges;
        edges.push_back({0.0, (1.0 - mu) * theta + mu * eval(a.quality, 0.0)});
        for (double v : others.values) {
          if (v == theta) {  // own tie: the profile already pins this effort
            edges.push_back({e, v});
            continue;
          }
          const double need = (v - (1.0 - mu) * theta) / mu;
          if (need < 0.0 || need > q_top) continue;
          const double ev = need == 0.0 ? 0.0 : inverse_quality(a.quality, need);
          edges.push_back({std::min(std::max(ev, 0.0), a.e_max), v});
        }
        edges.push_back({a.e_max, (1.0 - mu) * theta + mu * q_top});
        std::sort(edges.begin(), edges.end(), [](const edge& p, const edge& q) { return p.e < q.e; });

        for (const auto& ed : edges) viol = std::max(viol, pay(ed.e, envelope(ed.x, ed.e)) - stay);

        // interior stationary points: where a segment's marginal conditions
        // cross, the payoff along its chord peaks
        for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
          double lo = edges[j].e, hi = edges[j + 1].e;
          if (hi - lo <= 1e-12) continue;
          const double s = conjectured_benefit_slope(a, others, rule, edges[j].x, curve_side::above);
          if (!(s > 0.0)) continue;  // flat or falling chord: edge candidates cover it
          auto slack = [&](double eff) {
            return -cost_scale * deriv(a.cost, eff) + a.delta * a.alpha * mu * s * deriv(a.quality, eff);
          };
          if (slack(lo) <= 0.0 || slack(hi) >= 0.0) continue;  // peak sits on an edge
          while (hi - lo > 1e-12) {
            const double mid = 0.5 * (lo + hi);
            (slack(mid) > 0.0 ? lo : hi) = mid;
          }
          const double ec = 0.5 * (lo + hi);
          const double xc = (1.0 - mu) * theta + mu * eval(a.quality, ec);
          viol = std::max(viol, pay(ec, conjectured_benefit_direct(a, xc, others, rule)) - stay);
        }
      }
      it = cache.emplace(key, viol).first;
    }
    rep.max_violation = std::max(rep.max_violation, it->second);
    if (it->second > margin) {
      rep.holds = false;
      rep.violators.push_back(static_cast<int>(i));
    }
  }
  return rep;
}

// ---- designer-facing diagnostics -------------------------------------

struct capability_violation {
  int agent_hi = 0;  // the more capable agent
  int agent_lo = 0;
  double q_hi = 0.0;
  double q_lo = 0.0;
};

// At a rest point a strictly more capable agent should never produce lower
// quality. Capability is decided per behavior group and quality compared
// across group extremes, so the check stays cheap on large populations.
inline std::vector<capability_violation> check_capability_order(
    const population& pop, const std::vector<double>& efforts, double tol = 1e-9) {
  if (pop.agents.size() != efforts.size())
    throw std::invalid_argument("check_capability_order: efforts mismatch");
  const auto groups = detail::behavior_groups(pop.agents);
  int n_groups = 0;
  for (int g : groups) n_groups = std::max(n_groups, g + 1);

  struct extremes {
    int min_agent = -1, max_agent = -1;
    double min_q = 0.0, max_q = 0.0;
    int rep = -1;
  };
  std::vector<extremes> ext(n_groups);
  for (std::size_t i = 0; i < pop.agents.size(); ++i) {
    const double q = eval(pop.agents[i].quality, efforts[i]);
    auto& x = ext[groups[i]];
    if (x.rep < 0) {
      x.rep = static_cast<int>(i);
      x.min_agent = x.max_agent = static_cast<int>(i);
      x.min_q = x.max_q = q;
    } else {
      if (q < x.min_q) { x.min_q = q; x.min_agent = static_cast<int>(i); }
      if (q > x.max_q) { x.max_q = q; x.max_agent = static_cast<int>(i); }
    }
  }

  std::vector<capability_violation> out;
  for (int g = 0; g < n_groups; ++g) {
    for (int h = 0; h < n_groups; ++h) {
      if (g == h) continue;
      const agent_spec& hi = pop.agents[ext[g].rep];
      const agent_spec& lo = pop.agents[ext[h].rep];
      const auto efforts_grid = uniform_grid(0.0, std::min(hi.e_max, lo.e_max), 101);
      const auto ratings_grid = uniform_grid(
          0.0, std::max(eval(hi.quality, hi.e_max), eval(lo.quality, lo.e_max)), 101);
      if (!is_more_capable(hi, lo, efforts_grid, ratings_grid)) continue;
      if (ext[g].min_q < ext[h].max_q - tol)
        out.push_back({ext[g].min_agent, ext[h].max_agent, ext[g].min_q, ext[h].max_q});
    }
  }
  return out;
}

// Watches a trajectory for capability-order inversions: wherever one
// behavior group is strictly more capable than another, its lowest rating
// must stay at or above the other's highest in every slot. The guarantee
// only holds when everyone starts from the same rating, so unequal starts
// mark the monitor inapplicable rather than failing.
struct capability_order_monitor {
  struct inversion {
    long t = 0;
    int agent_hi = 0;  // the more capable agent that fell below
    int agent_lo = 0;
    double theta_hi = 0.0;
    double theta_lo = 0.0;
  };

  explicit capability_order_monitor(const population& pop)
      : groups_(detail::behavior_groups(pop.agents)) {
    for (int g : groups_) n_groups_ = std::max(n_groups_, g + 1);
    std::vector<int> reps(n_groups_, -1);
    for (std::size_t i = 0; i < groups_.size(); ++i)
      if (reps[groups_[i]] < 0) reps[groups_[i]] = static_cast<int>(i);
    for (std::size_t i = 1; i < pop.ratings.size(); ++i)
      if (pop.ratings[i] != pop.ratings[0]) { applicable_ = false; break; }
    if (!applicable_) return;
    for (int g = 0; g < n_groups_; ++g) {
      for (int h = 0; h < n_groups_; ++h) {
        if (g == h) continue;
        const agent_spec& hi = pop.agents[reps[g]];
        const agent_spec& lo = pop.agents[reps[h]];
        const auto efforts_grid = uniform_grid(0.0, std::min(hi.e_max, lo.e_max), 101);
        const auto ratings_grid = uniform_grid(
            0.0, std::max(eval(hi.quality, hi.e_max), eval(lo.quality, lo.e_max)), 101);
        if (is_more_capable(hi, lo, efforts_grid, ratings_grid)) pairs_.emplace_back(g, h);
      }
    }
  }

  bool applicable() const { return applicable_; }
  const std::vector<inversion>& inversions() const { return found_; }

  void observe(long t, const std::vector<double>& ratings) {
    if (!applicable_ || pairs_.empty()) return;
    struct extreme { double lo = 0.0, hi = 0.0; int lo_at = -1, hi_at = -1; };
    std::vector<extreme> ext(static_cast<std::size_t>(n_groups_));
    for (std::size_t i = 0; i < ratings.size(); ++i) {
      auto& x = ext[groups_[i]];
      if (x.lo_at < 0 || ratings[i] < x.lo) { x.lo = ratings[i]; x.lo_at = static_cast<int>(i); }
      if (x.hi_at < 0 || ratings[i] > x.hi) { x.hi = ratings[i]; x.hi_at = static_cast<int>(i); }
    }
    for (const auto& [g, h] : pairs_)
      if (ext[g].lo < ext[h].hi - 1e-12)
        found_.push_back({t, ext[g].lo_at, ext[h].hi_at, ext[g].lo, ext[h].hi});
  }

 private:
  std::vector<int> groups_;
  int n_groups_ = 0;
  bool applicable_ = true;
  std::vector<std::pair<int, int>> pairs_;  // (more capable group, less capable group)
  std::vector<inversion> found_;
};

struct objective_values {
  double total_quality = 0.0;
  double total_welfare = 0.0;
  double mean_quality = 0.0;
  double mean_welfare = 0.0;
};

// Designer's view of a state: produced quality and expected slot payoffs
// under the rule's matching, summed and per capita.
inline objective_values designer_objectives(const population& pop, const rating_profile& ratings,
                                            const std::vector<double>& efforts,
                                            const matching_rule_spec& rule) {
  if (pop.agents.size() != ratings.size() || pop.agents.size() != efforts.size())
    throw std::invalid_argument("designer_objectives: mismatched state");
  const auto d = distribution(ratings);
  objective_values out;
  for (std::size_t i = 0; i < pop.agents.size(); ++i) {
    const agent_spec& a = pop.agents[i];
    const int k = d.rank_of(ratings[i]);
    const double q = eval(a.quality, efforts[i]);
    const double u = expected_benefit_at(a, rule, d, k) -
                     expected_review_load(rule, d, k) * eval(a.cost, efforts[i]);
    out.total_quality += q;
    out.total_welfare += u;
  }
  const double n = static_cast<double>(pop.agents.size());
  out.mean_quality = out.total_quality / n;
  out.mean_welfare = out.total_welfare / n;
  return out;
}

// ---- step-size exploration -------------------------------------------

struct mu_scan_entry {
  double mu = 0.0;
  run_status status = run_status::max_iterations;
  long iterations = 0;
};

struct mu_scan_result {
  double max_converging_mu = 0.0;
  bool any_converged = false;
  std::vector<mu_scan_entry> entries;
};

// Try every step size on the grid lo, lo+res, ..., hi and report the largest
// one under which the dynamic still settles.
inline mu_scan_result find_max_step_size(const population& pop, const matching_rule_spec& rule,
                                         double lo, double hi, double res,
                                         const run_options& base = {}) {
  if (!(lo > 0.0 && hi < 1.0 && lo <= hi))
    throw std::invalid_argument("find_max_step_size: grid outside (0,1)");
  if (!(res > 0.0)) throw std::invalid_argument("find_max_step_size: nonpositive resolution");
  mu_scan_result out;
  const long steps = std::lround((hi - lo) / res);
  for (long k = 0; k <= steps; ++k) {
    const double mu = std::min(lo + static_cast<double>(k) * res, hi);
    run_options opts = base;
    opts.observer = nullptr;  // scans are about the verdicts, not the traces
    const auto r = run_dynamics(pop, rule, mu, opts);
    out.entries.push_back({mu, r.status, r.iterations});
    if (r.status == run_status::converged && mu >= out.max_converging_mu) {
      out.max_converging_mu = mu;
      out.any_converged = true;
    }
  }
  return out;
}

}  // namespace peermatch
