#pragma once

// Matching rules as probability kernels over reviewer ranks, the conjectured
// expected-benefit curve an agent optimizes against, concrete assignment
// sampling, expected review loads, and the desirability check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peermatch/functions.hpp"
#include "peermatch/ratings.hpp"

namespace peermatch {

enum class rule_kind { baseline, asymmetric, long_range, rating_independent };

struct matching_rule_spec {
  rule_kind kind = rule_kind::baseline;
  double gamma = 0.0;    // asymmetric: shift of the lone-interior up-probability
  double gamma_r = 0.0;  // long-range: up-mass fraction skipping one rank
  double gamma_p = 0.0;  // long-range: down-mass fraction skipping one rank

  static matching_rule_spec baseline() { return {}; }
  static matching_rule_spec asymmetric(double g) { return {rule_kind::asymmetric, g, 0.0, 0.0}; }
  static matching_rule_spec long_range(double gr, double gp) {
    if (!(gr >= 0.0 && gr <= 1.0 && gp >= 0.0 && gp <= 1.0))
      throw std::invalid_argument("long_range: parameters must lie in [0,1]");
    return {rule_kind::long_range, 0.0, gr, gp};
  }
  static matching_rule_spec rating_independent() {
    return {rule_kind::rating_independent, 0.0, 0.0, 0.0};
  }
};

inline const char* rule_name(rule_kind k) {
  switch (k) {
    case rule_kind::baseline: return "baseline";
    case rule_kind::asymmetric: return "asymmetric";
    case rule_kind::long_range: return "long_range";
    case rule_kind::rating_independent: return "rating_independent";
  }
  throw std::logic_error("rule_name: unknown rule");
}

inline rule_kind rule_from_name(const std::string& s) {
  if (s == "baseline") return rule_kind::baseline;
  if (s == "asymmetric") return rule_kind::asymmetric;
  if (s == "long_range") return rule_kind::long_range;
  if (s == "rating_independent") return rule_kind::rating_independent;
  throw std::invalid_argument("unknown matching rule: " + s);
}

// Where an agent's product goes: probability per reviewer rank, plus the
// mass of not being reviewed at all (only the lone-lowest branch has any).
struct rank_mixture {
  std::vector<std::pair<int, double>> by_rank;  // ascending reviewer rank
  double no_review_mass = 0.0;
  bool clamped = false;  // asymmetric shift had to be clamped into [0,1]

  double total() const {
    double s = no_review_mass;
    for (const auto& e : by_rank) s += e.second;
    return s;
  }
};

namespace detail {

// Reviewer-rank mixture for the agent at rank k of d (d includes the agent).
// With clamp=false the asymmetric shift is left as the raw affine value; the
// conjecture is optimized against that unclamped curve, while anything
// physical (sampling, loads, payoff bookkeeping) uses clamp=true.
inline rank_mixture mixture(const matching_rule_spec& rule, const rating_distribution& d, int k,
                            bool clamp) {
  if (k < 1 || k > d.K()) throw std::out_of_range("match_probabilities: rank outside distribution");
  rank_mixture out;
  const int K = d.K();

  if (rule.kind == rule_kind::rating_independent) {
    // uniform over the other agents, so each rank gets its head-count share
    if (d.total < 2) {
      out.no_review_mass = 1.0;
      return out;
    }
    const double denom = d.total - 1;
    for (int j = 1; j <= K; ++j) {
      const int c = d.count_at(j) - (j == k ? 1 : 0);
      if (c > 0) out.by_rank.emplace_back(j, c / denom);
    }
    return out;
  }

  if (d.count_at(k) >= 2) {  // same-rating group pairs internally
    out.by_rank.emplace_back(k, 1.0);
    return out;
  }
  if (K == 1) {  // a lone agent with K=1 is the whole population
    out.no_review_mass = 1.0;
    return out;
  }
  if (k == 1) {  // lone top: second-best reviews it
    out.by_rank.emplace_back(2, 1.0);
    return out;
  }
  if (k == K) {  // lone bottom: reviewed from above with probability d_K/d_{K-1}
    const double pr = d.value_at(K) / d.value_at(K - 1);
    if (pr > 0.0) out.by_rank.emplace_back(K - 1, pr);
    out.no_review_mass = 1.0 - pr;
    return out;
  }

  // lone interior: split between the neighbors so the expected reviewer
  // rating interpolates the agent's own rating
  const double hi = d.value_at(k - 1);
  const double me = d.value_at(k);
  const double lo = d.value_at(k + 1);
  const double up0 = (me - lo) / (hi - lo);

  if (rule.kind == rule_kind::long_range && k >= 3 && k <= K - 2) {
    const double down0 = 1.0 - up0;
    const std::pair<int, double> parts[] = {
        {k - 2, up0 * rule.gamma_r},
        {k - 1, up0 * (1.0 - rule.gamma_r)},
        {k + 1, down0 * (1.0 - rule.gamma_p)},
        {k + 2, down0 * rule.gamma_p},
    };
    for (const auto& e : parts)
      if (e.second != 0.0) out.by_rank.push_back(e);
    return out;
  }

  double up = up0;
  if (rule.kind == rule_kind::asymmetric) {
    up = up0 + rule.gamma * me;
    if (clamp) {
      const double boxed = std::min(1.0, std::max(0.0, up));
      if (boxed != up) {
        out.clamped = true;
        up = boxed;
      }
    }
  }
  if (up != 0.0) out.by_rank.emplace_back(k - 1, up);
  if (up != 1.0) out.by_rank.emplace_back(k + 1, 1.0 - up);
  return out;
}

}  // namespace detail

// Physical matching probabilities (asymmetric shifts clamped to [0,1] with
// the complement going to the other neighbor, so the pair still sums to 1).
inline rank_mixture match_probabilities(const matching_rule_spec& rule,
                                        const rating_distribution& d, int k) {
  return detail::mixture(rule, d, k, /*clamp=*/true);
}

// Expected benefit of the agent currently at rank k, using the physical
// probabilities and the rank ratings as the reviewers' delivered qualities.
inline double expected_benefit_at(const agent_spec& a, const matching_rule_spec& rule,
                                  const rating_distribution& d, int k) {
  const auto mix = match_probabilities(rule, d, k);
  double s = 0.0;
  for (const auto& [rank, w] : mix.by_rank) s += w * eval(a.benefit, d.value_at(rank));
  return s;
}

// Conjectured expected benefit as a function of the agent's candidate own
// rating x, holding the others fixed: reinsert x, then mix the benefit over
// reviewer ranks. The asymmetric variant stays unclamped here (the affine
// conjecture curve), per the equilibrium analysis.
inline double conjectured_benefit(const agent_spec& a, double x, const rating_distribution& others,
                                  const matching_rule_spec& rule) {
  if (x < 0.0) throw std::domain_error("conjectured_benefit: negative candidate rating");
  const auto ins = insert_one(others, x);
  const auto mix = detail::mixture(rule, ins.dist, ins.rank, /*clamp=*/false);
  double s = 0.0;
  for (const auto& [rank, w] : mix.by_rank) s += w * eval(a.benefit, ins.dist.value_at(rank));
  return s;
}

// Independent closed form of the baseline conjectured-benefit curve: linear
// ramp below the others' minimum, chord interpolation of b between
// consecutive others' ratings, exact benefit at ties, flat above the max.
inline double baseline_benefit_interpolated(const agent_spec& a, double x,
                                            const rating_distribution& others) {
  if (x < 0.0) throw std::domain_error("baseline_benefit_interpolated: negative rating");
  if (others.K() == 0) return 0.0;
  const auto& v = others.values;
  const double top = v.front(), bot = v.back();
  if (x >= top) return eval(a.benefit, top);
  if (x <= bot) {
    if (x == bot) return eval(a.benefit, bot);
    return bot > 0.0 ? eval(a.benefit, bot) * (x / bot) : 0.0;
  }
  for (std::size_t j = 0; j + 1 < v.size(); ++j) {
    if (x == v[j]) return eval(a.benefit, v[j]);
    if (v[j] > x && x > v[j + 1]) {
      const double u = (x - v[j + 1]) / (v[j] - v[j + 1]);
      return u * eval(a.benefit, v[j]) + (1.0 - u) * eval(a.benefit, v[j + 1]);
    }
  }
  throw std::logic_error("baseline_benefit_interpolated: bracket not found");
}

// Allocation-free evaluation of the same curve, for the solver's hot loops
// and the grid oracle. Property tests pin it to the reinsert-based path.
inline double conjectured_benefit_direct(const agent_spec& a, double x,
                                         const rating_distribution& others,
                                         const matching_rule_spec& rule) {
  if (x < 0.0) throw std::domain_error("conjectured_benefit: negative candidate rating");
  const int m = others.K();
  if (rule.kind == rule_kind::rating_independent) {
    // reviewer uniform over the other agents: own rating plays no part
    if (others.total == 0) return 0.0;
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += others.counts[j] * eval(a.benefit, others.values[j]);
    return s / others.total;
  }
  if (m == 0) return 0.0;
  const auto& v = others.values;
  int above = 0;
  while (above < m && v[above] > x) ++above;
  if (above < m && v[above] == x) return eval(a.benefit, x);  // joins that group
  if (above == 0) return eval(a.benefit, v[0]);               // lone top
  if (above == m) {                                           // lone bottom
    const double bot = v[m - 1];
    return bot > 0.0 ? (x / bot) * eval(a.benefit, bot) : 0.0;
  }
  const double hi = v[above - 1], lo = v[above];
  const double u0 = (x - lo) / (hi - lo);
  switch (rule.kind) {
    case rule_kind::baseline:
      return u0 * eval(a.benefit, hi) + (1.0 - u0) * eval(a.benefit, lo);
    case rule_kind::asymmetric: {
      const double u = u0 + rule.gamma * x;  // unclamped conjecture
      return u * eval(a.benefit, hi) + (1.0 - u) * eval(a.benefit, lo);
    }
    case rule_kind::long_range: {
      const int k = above + 1;     // inserted rank among m+1 values
      if (k >= 3 && k <= m - 1) {  // within [3, K'-2]
        const double bh = (1.0 - rule.gamma_r) * eval(a.benefit, hi) +
                          rule.gamma_r * eval(a.benefit, v[above - 2]);
        const double bl = (1.0 - rule.gamma_p) * eval(a.benefit, lo) +
                          rule.gamma_p * eval(a.benefit, v[above + 1]);
        return u0 * bh + (1.0 - u0) * bl;
      }
      return u0 * eval(a.benefit, hi) + (1.0 - u0) * eval(a.benefit, lo);
    }
    default:
      throw std::logic_error("conjectured_benefit_direct: unreachable");
  }
}

enum class curve_side { below, above };

// One-sided analytic slope dB/dx of the conjectured benefit at x. The curve
// is affine between consecutive others' ratings under every rule, so the
// slope is a rank-local closed form; ties take the slope of the adjacent
// open segment on the requested side.
inline double conjectured_benefit_slope(const agent_spec& a, const rating_distribution& others,
                                        const matching_rule_spec& rule, double x, curve_side s) {
  if (rule.kind == rule_kind::rating_independent) return 0.0;
  const int m = others.K();
  if (m == 0) return 0.0;
  const auto& v = others.values;

  // number of others' values that lie above the open segment on side s
  int above = 0;
  if (s == curve_side::above) {
    while (above < m && v[above] > x) ++above;
  } else {
    while (above < m && v[above] >= x) ++above;
  }

  if (above == 0) return 0.0;  // flat beyond the others' maximum
  if (above == m) {            // ramp below the others' minimum
    const double bot = v[m - 1];
    return bot > 0.0 ? eval(a.benefit, bot) / bot : 0.0;
  }

  const double hi = v[above - 1];
  const double lo = v[above];
  const double chord = (eval(a.benefit, hi) - eval(a.benefit, lo)) / (hi - lo);
  switch (rule.kind) {
    case rule_kind::baseline:
      return chord;
    case rule_kind::asymmetric:
      // d/dx [ (u0 + gamma*x) * b(hi) + (1 - u0 - gamma*x) * b(lo) ]
      return chord + rule.gamma * (eval(a.benefit, hi) - eval(a.benefit, lo));
    case rule_kind::long_range: {
      // inserted rank is above+1 in a distribution of K'=m+1 values
      const int k = above + 1;
      if (k >= 3 && k <= (m + 1) - 2) {
        const double bh = (1.0 - rule.gamma_r) * eval(a.benefit, hi) +
                          rule.gamma_r * eval(a.benefit, v[above - 2]);
        const double bl = (1.0 - rule.gamma_p) * eval(a.benefit, lo) +
                          rule.gamma_p * eval(a.benefit, v[above + 1]);
        return (bh - bl) / (hi - lo);
      }
      return chord;
    }
    default:
      return 0.0;
  }
}

// One-sided limit of the open-segment curve as it approaches x. At an exact
// tie the curve value can jump (the same-rating branch takes over), so the
// solver's envelope semantics need the limits next to the tie value itself.
inline double conjectured_benefit_limit(const agent_spec& a, const rating_distribution& others,
                                        const matching_rule_spec& rule, double x, curve_side s) {
  const int m = others.K();
  if (m == 0) return 0.0;
  if (rule.kind == rule_kind::rating_independent)
    return conjectured_benefit_direct(a, x, others, rule);
  const auto& v = others.values;
  int above = 0;
  if (s == curve_side::above) {
    while (above < m && v[above] > x) ++above;
  } else {
    while (above < m && v[above] >= x) ++above;
  }
  if (above == 0) return eval(a.benefit, v[0]);  // flat beyond the top
  if (above == m) {                              // ramp below the bottom
    const double bot = v[m - 1];
    return bot > 0.0 ? (x / bot) * eval(a.benefit, bot) : 0.0;
  }
  const double hi = v[above - 1], lo = v[above];
  const double u0 = (x - lo) / (hi - lo);
  switch (rule.kind) {
    case rule_kind::baseline:
      return u0 * eval(a.benefit, hi) + (1.0 - u0) * eval(a.benefit, lo);
    case rule_kind::asymmetric: {
      const double u = u0 + rule.gamma * x;
      return u * eval(a.benefit, hi) + (1.0 - u) * eval(a.benefit, lo);
    }
    case rule_kind::long_range: {
      const int k = above + 1;
      if (k >= 3 && k <= m - 1) {
        const double bh = (1.0 - rule.gamma_r) * eval(a.benefit, hi) +
                          rule.gamma_r * eval(a.benefit, v[above - 2]);
        const double bl = (1.0 - rule.gamma_p) * eval(a.benefit, lo) +
                          rule.gamma_p * eval(a.benefit, v[above + 1]);
        return u0 * bh + (1.0 - u0) * bl;
      }
      return u0 * eval(a.benefit, hi) + (1.0 - u0) * eval(a.benefit, lo);
    }
    default:
      throw std::logic_error("conjectured_benefit_limit: unreachable");
  }
}

// Expected number of products the (each) agent at rank k reviews.
inline double expected_review_load(const matching_rule_spec& rule, const rating_distribution& d,
                                   int k) {
  if (k < 1 || k > d.K()) throw std::out_of_range("expected_review_load: bad rank");
  if (rule.kind == rule_kind::rating_independent)
    return d.total >= 2 ? 1.0 : 0.0;  // every other agent sends 1/(N-1)
  double load = d.count_at(k) >= 2 ? 1.0 : 0.0;  // in-group derangement
  for (int j = 1; j <= d.K(); ++j) {
    if (j == k || d.count_at(j) != 1) continue;  // grouped ranks stay internal
    const auto mix = detail::mixture(rule, d, j, /*clamp=*/true);
    for (const auto& [rank, w] : mix.by_rank)
      if (rank == k) load += w / d.count_at(k);
  }
  return load;
}

struct assignment {
  std::vector<int> reviewer_of;  // product owner -> reviewer agent, -1 = unreviewed
  std::vector<int> review_load;  // products each agent reviews
};

// Draw one concrete reviewer assignment. Same-rating groups use a seeded
// cyclic shift (a derangement); lone agents draw a reviewer rank from their
// mixture and then a uniform member of that rank.
inline assignment sample_assignment(const matching_rule_spec& rule, const rating_profile& p,
                                    std::uint64_t seed) {
  const int n = static_cast<int>(p.size());
  assignment out;
  out.reviewer_of.assign(n, -1);
  out.review_load.assign(n, 0);
  if (n == 0) return out;

  const auto d = distribution(p);
  const auto rk = ranks_of(p, d);
  std::vector<std::vector<int>> members(d.K() + 1);
  for (int i = 0; i < n; ++i) members[rk[i]].push_back(i);

  std::mt19937_64 rng(seed);
  if (rule.kind == rule_kind::rating_independent) {
    if (n >= 2) {
      std::uniform_int_distribution<int> pick(0, n - 2);
      for (int i = 0; i < n; ++i) {
        int j = pick(rng);
        if (j >= i) ++j;  // skip self
        out.reviewer_of[i] = j;
      }
    }
  } else {
    for (int k = 1; k <= d.K(); ++k) {
      const auto& g = members[k];
      const int c = static_cast<int>(g.size());
      if (c < 2) continue;
      std::uniform_int_distribution<int> shift(1, c - 1);
      const int sft = shift(rng);
      for (int m = 0; m < c; ++m) out.reviewer_of[g[m]] = g[(m + sft) % c];
    }
    for (int k = 1; k <= d.K(); ++k) {
      if (members[k].size() != 1) continue;
      const int i = members[k][0];
      const auto mix = match_probabilities(rule, d, k);
      if (mix.by_rank.empty()) continue;
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      double r = u01(rng);
      int target = -1;
      for (const auto& [rank, w] : mix.by_rank) {
        if (r < w) {
          target = rank;
          break;
        }
        r -= w;
      }
      if (target < 0 && mix.no_review_mass == 0.0)
        target = mix.by_rank.back().first;  // guard fp residue when mass is exhaustive
      if (target < 0) continue;
      const auto& tg = members[target];
      std::uniform_int_distribution<int> pick(0, static_cast<int>(tg.size()) - 1);
      out.reviewer_of[i] = tg[pick(rng)];
    }
  }
  for (int i = 0; i < n; ++i)
    if (out.reviewer_of[i] >= 0) ++out.review_load[out.reviewer_of[i]];
  return out;
}

struct desirability_report {
  bool nondecreasing = true;
  bool concave = true;
  bool strictly_increasing = true;  // some rating gain raises the benefit
  bool load_uniform = true;
  bool load_positive = true;
  std::vector<std::string> violations;

  bool pass() const {
    return nondecreasing && concave && strictly_increasing && load_uniform && load_positive;
  }
};

// Probe a rule against sampled rating distributions: the conjectured-benefit
// curve (sample taken as the others) must be non-decreasing and concave in
// the own rating, and the expected review load (sample taken as the
// population) must be equal across ranks and positive.
inline desirability_report check_desirable(const matching_rule_spec& rule,
                                           const std::vector<rating_distribution>& samples,
                                           const function_spec& benefit) {
  if (samples.empty()) throw std::invalid_argument("check_desirable: no sampled distributions");
  desirability_report rep;
  agent_spec probe;
  probe.benefit = benefit;

  const int grid_n = 1000;
  for (std::size_t si = 0; si < samples.size(); ++si) {
    const auto& d = samples[si];
    if (d.K() == 0) continue;
    const double x_hi = d.values.front() * 1.2;
    std::vector<double> curve(grid_n + 1);
    for (int i = 0; i <= grid_n; ++i)
      curve[i] = conjectured_benefit(probe, x_hi * i / grid_n, d, rule);

    double scale = 1.0;
    for (double b : curve) scale = std::max(scale, std::abs(b));
    const double eps = 1e-9 * scale;

    double prev_slope = std::numeric_limits<double>::infinity();
    bool rose = false;
    for (int i = 0; i < grid_n; ++i) {
      const double step = curve[i + 1] - curve[i];
      if (step < -eps) {
        rep.nondecreasing = false;
        rep.violations.push_back("sample " + std::to_string(si) + ": benefit decreases near x=" +
                                 std::to_string(x_hi * i / grid_n));
      }
      if (step > eps) rose = true;
      const double slope = step * grid_n / x_hi;
      if (slope > prev_slope + 1e-7 * scale) {
        rep.concave = false;
        rep.violations.push_back("sample " + std::to_string(si) + ": slope rises near x=" +
                                 std::to_string(x_hi * i / grid_n));
      }
      prev_slope = slope;
    }
    if (!rose) {
      rep.strictly_increasing = false;
      rep.violations.push_back("sample " + std::to_string(si) +
                               ": no rating incentive (benefit flat in own rating)");
    }

    if (rule.kind == rule_kind::baseline) {
      // analytic slope sequence along increasing x must fall monotonically
      double prev = std::numeric_limits<double>::infinity();
      for (int k = d.K(); k >= 1; --k) {
        const double mid = (k == d.K()) ? d.values[k - 1] / 2.0
                                        : (d.values[k - 1] + d.values[k]) / 2.0;
        const double sl = conjectured_benefit_slope(probe, d, rule, mid, curve_side::above);
        if (sl < -1e-12 || sl > prev + 1e-12) {
          rep.concave = rep.concave && sl <= prev + 1e-12;
          rep.nondecreasing = rep.nondecreasing && sl >= -1e-12;
          rep.violations.push_back("sample " + std::to_string(si) +
                                   ": analytic slope breaks order at segment " + std::to_string(k));
        }
        prev = sl;
      }
    }

    std::vector<double> loads(d.K());
    for (int k = 1; k <= d.K(); ++k) loads[k - 1] = expected_review_load(rule, d, k);
    for (double L : loads) {
      if (std::abs(L - loads[0]) > 1e-12) {
        rep.load_uniform = false;
        rep.violations.push_back("sample " + std::to_string(si) + ": uneven review load");
        break;
      }
    }
    if (loads[0] <= 0.0) {
      rep.load_positive = false;
      rep.violations.push_back("sample " + std::to_string(si) + ": zero review load");
    }
  }
  return rep;
}

}  // namespace peermatch
