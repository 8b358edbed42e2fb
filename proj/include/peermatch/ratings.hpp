#pragma once

// Rating profiles, the induced descending distribution of distinct ratings,
// and the update / reinsertion operations the matching layer builds on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace peermatch {

// Ratings carry 12 decimal digits. Quantizing at every write makes "equal
// rating" a literal double comparison, so ranks, ties and fixed points are
// exact instead of tolerance games.
inline double quantize_rating(double x) {
  const double q = std::llround(x * 1e12) / 1e12;
  return q == 0.0 ? 0.0 : q;  // normalize -0
}

struct rating_profile {
  std::vector<double> ratings;

  rating_profile() = default;
  explicit rating_profile(std::vector<double> r) : ratings(std::move(r)) {
    for (double& x : ratings) {
      if (x < 0.0) throw std::domain_error("rating_profile: negative rating");
      x = quantize_rating(x);
    }
  }

  std::size_t size() const { return ratings.size(); }
  double operator[](std::size_t i) const { return ratings[i]; }

  void set(std::size_t i, double x) {
    if (x < 0.0) throw std::domain_error("rating_profile: negative rating");
    ratings[i] = quantize_rating(x);
  }
};

// Distinct ratings in strictly descending order with their multiplicities.
// Rank 1 is the highest rating.
struct rating_distribution {
  std::vector<double> values;
  std::vector<int> counts;
  int total = 0;

  int K() const { return static_cast<int>(values.size()); }

  // 1-based rank of an exact value; 0 when the value is not present.
  int rank_of(double v) const {
    auto it = std::lower_bound(values.begin(), values.end(), v, std::greater<double>());
    if (it != values.end() && *it == v)
      return static_cast<int>(it - values.begin()) + 1;
    return 0;
  }

  double value_at(int rank) const { return values.at(rank - 1); }
  int count_at(int rank) const { return counts.at(rank - 1); }
};

inline rating_distribution distribution(const rating_profile& p) {
  rating_distribution d;
  d.total = static_cast<int>(p.size());
  std::vector<double> sorted = p.ratings;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  for (double v : sorted) {
    if (!d.values.empty() && d.values.back() == v) {
      ++d.counts.back();
    } else {
      d.values.push_back(v);
      d.counts.push_back(1);
    }
  }
  return d;
}

inline std::vector<int> ranks_of(const rating_profile& p, const rating_distribution& d) {
  std::vector<int> r(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    r[i] = d.rank_of(p[i]);
    if (r[i] == 0) throw std::logic_error("ranks_of: rating missing from its own distribution");
  }
  return r;
}

// Distribution with one agent at the given rank removed. Used to form the
// "others" view an agent reinserts its prospective rating into.
inline rating_distribution remove_one(const rating_distribution& d, int rank) {
  if (rank < 1 || rank > d.K()) throw std::out_of_range("remove_one: bad rank");
  rating_distribution out = d;
  out.total -= 1;
  if (--out.counts[rank - 1] == 0) {
    out.counts.erase(out.counts.begin() + (rank - 1));
    out.values.erase(out.values.begin() + (rank - 1));
  }
  return out;
}

struct insertion {
  rating_distribution dist;  // distribution with the new rating included
  int rank = 0;              // 1-based rank the rating lands at
  bool tie = false;          // true when it joined an existing group
};

// The candidate value is taken as given, not quantized: stored ratings are
// already on the grid, and conjectured (prospective) ratings must stay exact
// so that curve evaluations between grid points are smooth.
inline insertion insert_one(const rating_distribution& d, double x) {
  insertion out;
  out.dist = d;
  out.dist.total += 1;
  auto& vals = out.dist.values;
  auto it = std::lower_bound(vals.begin(), vals.end(), x, std::greater<double>());
  const auto idx = it - vals.begin();
  if (it != vals.end() && *it == x) {
    out.tie = true;
    ++out.dist.counts[idx];
  } else {
    vals.insert(it, x);
    out.dist.counts.insert(out.dist.counts.begin() + idx, 1);
  }
  out.rank = static_cast<int>(idx) + 1;
  return out;
}

// One slot of the rating recursion: reviewed products pull the rating toward
// the delivered report, unreviewed products keep it unchanged.
inline double update_rating(double theta, double report, double mu, bool reviewed) {
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("update_rating: mu must lie in (0,1)");
  if (theta < 0.0 || report < 0.0) throw std::domain_error("update_rating: negative rating or report");
  if (!reviewed) return quantize_rating(theta);
  return quantize_rating((1.0 - mu) * theta + mu * report);
}

struct reinsert_result {
  rating_profile profile;
  rating_distribution dist;
  int rank = 0;
  bool tie = false;
};

// Replace one agent's rating and report where it lands among the others.
inline reinsert_result reinsert(const rating_profile& p, std::size_t agent, double x) {
  if (agent >= p.size()) throw std::out_of_range("reinsert: bad agent index");
  reinsert_result out;
  out.profile = p;
  out.profile.set(agent, x);
  out.dist = distribution(out.profile);
  out.rank = out.dist.rank_of(out.profile[agent]);
  out.tie = out.dist.count_at(out.rank) > 1;
  return out;
}

inline double l1_distance(const rating_profile& a, const rating_profile& b) {
  if (a.size() != b.size()) throw std::invalid_argument("l1_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

}  // namespace peermatch
