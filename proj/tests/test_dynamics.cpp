#include "peermatch/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace peermatch;

namespace {

agent_spec stock_agent() {
  agent_spec a;
  a.delta = 0.8;
  a.alpha = 1.0;
  a.cost = function_spec::power_cost(1.0, 2.0);
  a.quality = function_spec::linear_quality(1.0);
  a.benefit = function_spec::quadratic_benefit(-1.0, 2.0);
  return a;
}

agent_spec typed_agent(int tau) {
  agent_spec a = stock_agent();
  a.type_id = tau;
  a.alpha = 0.2 * tau;
  a.quality = function_spec::linear_quality(0.2 * tau);
  return a;
}

population uniform_population(int n, double theta0) {
  return make_population({stock_agent()}, {n}, {theta0});
}

population typed_population(int per_type, double theta0) {
  std::vector<agent_spec> types;
  std::vector<int> counts;
  std::vector<double> init;
  for (int tau = 1; tau <= 10; ++tau) {
    types.push_back(typed_agent(tau));
    counts.push_back(per_type);
    init.push_back(theta0);
  }
  return make_population(types, counts, init);
}

}  // namespace

TEST(population, expands_types_in_order) {
  const auto p = make_population({typed_agent(1), typed_agent(2)}, {2, 3}, {0.5, 0.7});
  ASSERT_EQ(p.agents.size(), 5u);
  EXPECT_EQ(p.agents[1].type_id, 1);
  EXPECT_EQ(p.agents[2].type_id, 2);
  EXPECT_DOUBLE_EQ(p.ratings[0], 0.5);
  EXPECT_DOUBLE_EQ(p.ratings[4], 0.7);
  EXPECT_THROW(make_population({stock_agent()}, {0}, {0.5}), std::invalid_argument);
  EXPECT_THROW(make_population({stock_agent()}, {1, 2}, {0.5}), std::invalid_argument);
  EXPECT_THROW(make_population({}, {}, {}), std::invalid_argument);
}

TEST(dynamics, uniform_start_below_threshold_is_a_fixed_point) {
  const auto pop = uniform_population(4, 0.3);
  const auto sr = step(pop, pop.ratings, matching_rule_spec::baseline(), 0.1);
  EXPECT_DOUBLE_EQ(sr.l1_delta, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(sr.ratings_next[i], 0.3);
    EXPECT_NEAR(sr.efforts[i], 0.3, 1e-10);
    EXPECT_TRUE(sr.reviewed[i]);
    // matched within the group: b(0.3) - c(0.3) = 0.51 - 0.09
    EXPECT_NEAR(sr.payoffs[i], 0.42, 1e-12);
    // intercept absorbs the gap between payoff and conjectured benefit
    EXPECT_NEAR(sr.betas_next[i], 0.42 - 0.51, 1e-12);
  }
}

TEST(dynamics, uniform_start_above_threshold_settles_at_the_threshold) {
  // the one-dimensional map contracts toward the rating where the tie
  // condition binds: 1/3 for this agent at mu = 0.1
  const auto pop = uniform_population(4, 0.5);
  const auto r = run_dynamics(pop, matching_rule_spec::baseline(), 0.1);
  EXPECT_EQ(r.status, run_status::converged);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.ratings[i], 1.0 / 3.0, 1e-7);
  EXPECT_LE(r.final_l1_delta, 1e-8);
  EXPECT_LT(r.max_rho, 1.0);

  const auto ce = verify_ce(pop, r.ratings, matching_rule_spec::baseline(), 0.1);
  EXPECT_TRUE(ce.is_equilibrium) << "max residual " << ce.max_rating_residual;
  const auto ineq =
      check_equilibrium_inequalities(pop, r.ratings, matching_rule_spec::baseline(), 0.1);
  EXPECT_TRUE(ineq.holds) << "max violation " << ineq.max_violation;

  // a rest point strictly below the threshold has genuine marginal slack, so
  // it passes even with no margin at all
  const auto resting = uniform_population(4, 0.3);
  const auto strict = check_equilibrium_inequalities(resting, resting.ratings,
                                                     matching_rule_spec::baseline(), 0.1, 0.0);
  EXPECT_TRUE(strict.holds) << "max violation " << strict.max_violation;
}

TEST(dynamics, both_checkers_reject_a_perturbed_state) {
  const auto pop = uniform_population(4, 0.5);
  const auto r = run_dynamics(pop, matching_rule_spec::baseline(), 0.1);
  ASSERT_EQ(r.status, run_status::converged);
  for (double bump : {0.05, -0.05}) {
    rating_profile perturbed = r.ratings;
    perturbed.set(0, r.ratings[0] + bump);
    const auto ce = verify_ce(pop, perturbed, matching_rule_spec::baseline(), 0.1);
    const auto ineq =
        check_equilibrium_inequalities(pop, perturbed, matching_rule_spec::baseline(), 0.1);
    EXPECT_FALSE(ce.is_equilibrium) << "bump " << bump;
    EXPECT_FALSE(ineq.holds) << "bump " << bump;
    ASSERT_FALSE(ce.failures.empty());
    EXPECT_EQ(ce.failures[0].agent, 0);
  }
}

TEST(dynamics, jump_held_rest_points_pass_the_inequality_check) {
  // Under a rating-offset rule the benefit curve jumps at ties, and a
  // converged profile can rest where the adjacent chord slopes alone would
  // read as a deviation incentive: the tie's value cliff is what holds the
  // agents in place. The checker has to account for that jump, or every
  // converged non-baseline run would be misclassified.
  const auto pop = typed_population(2, 1.0);
  for (const auto& rule : {matching_rule_spec::asymmetric(-0.2), matching_rule_spec::asymmetric(0.2),
                           matching_rule_spec::long_range(0.0, 1.0)}) {
    run_options opts;
    opts.max_iterations = 3000;
    const auto r = run_dynamics(pop, rule, 0.1, opts);
    ASSERT_EQ(r.status, run_status::converged) << rule_name(rule.kind);
    const auto ce = verify_ce(pop, r.ratings, rule, 0.1, 1e-6);
    EXPECT_TRUE(ce.is_equilibrium) << rule_name(rule.kind);
    const auto iq = check_equilibrium_inequalities(pop, r.ratings, rule, 0.1);
    EXPECT_TRUE(iq.holds) << rule_name(rule.kind) << " violation " << iq.max_violation;

    // the payoff-gap formulation still catches a real deviation incentive
    rating_profile bumped = r.ratings;
    bumped.set(0, r.ratings[0] + 0.05);
    const auto bad = check_equilibrium_inequalities(pop, bumped, rule, 0.1);
    EXPECT_FALSE(bad.holds) << rule_name(rule.kind);
  }
}

TEST(dynamics, rating_independent_rule_decays_to_zero) {
  const auto pop = uniform_population(5, 0.8);
  run_options opts;
  opts.max_iterations = 2000;
  const auto r = run_dynamics(pop, matching_rule_spec::rating_independent(), 0.1, opts);
  EXPECT_EQ(r.status, run_status::converged);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_LE(r.ratings[i], 1e-7);
  for (double e : r.efforts) EXPECT_DOUBLE_EQ(e, 0.0);
}

TEST(dynamics, sampled_mode_tracks_expected_mode_for_grouped_profiles) {
  // with every rank fully grouped the realized derangements review everyone,
  // so the rating paths coincide; payoffs use realized reviewer quality and
  // only agree once ratings and qualities have met
  const auto pop = uniform_population(6, 0.5);
  run_options expected;
  run_options sampled;
  sampled.mode = step_mode::sampled;
  sampled.seed = 17;
  const auto re = run_dynamics(pop, matching_rule_spec::baseline(), 0.1, expected);
  const auto rs = run_dynamics(pop, matching_rule_spec::baseline(), 0.1, sampled);
  EXPECT_EQ(re.status, run_status::converged);
  EXPECT_EQ(rs.status, run_status::converged);
  EXPECT_EQ(re.iterations, rs.iterations);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_DOUBLE_EQ(re.ratings[i], rs.ratings[i]);
    EXPECT_NEAR(re.payoffs[i], rs.payoffs[i], 1e-9);
  }
}

TEST(dynamics, sampled_mode_replays_exactly_under_the_same_seed) {
  const auto pop = typed_population(3, 0.8);
  run_options opts;
  opts.mode = step_mode::sampled;
  opts.seed = 99;
  opts.max_iterations = 50;
  opts.detect_cycles = false;
  const auto r1 = run_dynamics(pop, matching_rule_spec::baseline(), 0.2, opts);
  const auto r2 = run_dynamics(pop, matching_rule_spec::baseline(), 0.2, opts);
  ASSERT_EQ(r1.iterations, r2.iterations);
  for (std::size_t i = 0; i < pop.agents.size(); ++i) {
    EXPECT_DOUBLE_EQ(r1.ratings[i], r2.ratings[i]);
    EXPECT_DOUBLE_EQ(r1.efforts[i], r2.efforts[i]);
    EXPECT_DOUBLE_EQ(r1.payoffs[i], r2.payoffs[i]);
  }
}

TEST(dynamics, observer_sees_a_consistent_trajectory) {
  const auto pop = uniform_population(4, 0.5);
  struct row {
    long t;
    std::vector<double> ratings, next;
    double delta, rho;
  };
  std::vector<row> rows;
  run_options opts;
  opts.observer = [&](const step_view& v) {
    rows.push_back({v.t, v.ratings, v.next_ratings, v.l1_delta, v.rho});
  };
  const auto r = run_dynamics(pop, matching_rule_spec::baseline(), 0.1, opts);
  ASSERT_EQ(static_cast<long>(rows.size()), r.iterations);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].t, static_cast<long>(k));
    if (k > 0) {
      EXPECT_EQ(rows[k].ratings, rows[k - 1].next);
      if (rows[k - 1].delta > 0.0)
        EXPECT_NEAR(rows[k].rho, rows[k].delta / rows[k - 1].delta, 1e-12);
    }
  }
  // trajectory from above the threshold decreases monotonically
  for (std::size_t k = 1; k < rows.size(); ++k)
    EXPECT_LE(rows[k].ratings[0], rows[k - 1].ratings[0] + 1e-15);
}

TEST(dynamics, heterogeneous_population_converges_and_orders_quality_by_capability) {
  const auto pop = typed_population(3, 1.0);
  run_options opts;
  opts.max_iterations = 5000;
  const auto r = run_dynamics(pop, matching_rule_spec::baseline(), 0.1, opts);
  EXPECT_EQ(r.status, run_status::converged);
  EXPECT_TRUE(check_capability_order(pop, r.efforts).empty());
  const auto ce = verify_ce(pop, r.ratings, matching_rule_spec::baseline(), 0.1, 1e-6);
  EXPECT_TRUE(ce.is_equilibrium) << "max residual " << ce.max_rating_residual;
}

TEST(dynamics, capability_checker_flags_an_inverted_state) {
  const auto pop = make_population({typed_agent(10), typed_agent(1)}, {1, 1}, {0.5, 0.5});
  // the strong type idles while the weak one works flat out
  const std::vector<double> efforts = {0.0, 1.0};
  const auto v = check_capability_order(pop, efforts);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].agent_hi, 0);
  EXPECT_EQ(v[0].agent_lo, 1);
  EXPECT_LT(v[0].q_hi, v[0].q_lo);
}

TEST(dynamics, rating_monitor_stays_quiet_on_an_ordered_trajectory) {
  const auto pop = typed_population(2, 1.0);
  capability_order_monitor mon(pop);
  ASSERT_TRUE(mon.applicable());
  run_options opts;
  opts.max_iterations = 5000;
  opts.observer = [&](const step_view& v) { mon.observe(v.t, v.ratings); };
  const auto r = run_dynamics(pop, matching_rule_spec::baseline(), 0.1, opts);
  mon.observe(r.iterations, r.ratings.ratings);
  EXPECT_EQ(r.status, run_status::converged);
  EXPECT_TRUE(mon.inversions().empty());
}

TEST(dynamics, rating_monitor_flags_a_leapfrog_and_knows_its_limits) {
  const auto pop = make_population({typed_agent(1), typed_agent(10)}, {2, 2}, {0.5, 0.5});
  capability_order_monitor mon(pop);
  ASSERT_TRUE(mon.applicable());
  // the strong pair dips below the weak pair: exactly one ordered-pair breach
  mon.observe(3, {0.5, 0.5, 0.2, 0.2});
  ASSERT_EQ(mon.inversions().size(), 1u);
  EXPECT_EQ(mon.inversions()[0].t, 3);
  EXPECT_EQ(mon.inversions()[0].agent_hi, 2);  // a type-10 agent fell
  EXPECT_LT(mon.inversions()[0].theta_hi, mon.inversions()[0].theta_lo);

  // staggered starts void the guarantee, so the monitor declines to judge
  const auto staggered = make_population({typed_agent(1), typed_agent(10)}, {2, 2}, {0.4, 0.9});
  capability_order_monitor off(staggered);
  EXPECT_FALSE(off.applicable());
  off.observe(0, {0.9, 0.9, 0.1, 0.1});
  EXPECT_TRUE(off.inversions().empty());
}

TEST(dynamics, designer_objectives_at_the_trap_fixed_point) {
  const auto pop = uniform_population(4, 1.0 / 3.0);
  const auto sr = step(pop, pop.ratings, matching_rule_spec::baseline(), 0.1);
  const auto obj = designer_objectives(pop, pop.ratings, sr.efforts, matching_rule_spec::baseline());
  EXPECT_NEAR(obj.total_quality, 4.0 / 3.0, 1e-9);
  // per agent: b(1/3) - c(1/3) = 5/9 - 1/9
  EXPECT_NEAR(obj.total_welfare, 16.0 / 9.0, 1e-9);
  EXPECT_NEAR(obj.mean_quality, 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(obj.mean_welfare, 4.0 / 9.0, 1e-9);
}

TEST(dynamics, step_size_scan_reports_grid_verdicts) {
  const auto pop = uniform_population(4, 0.5);
  run_options opts;
  opts.max_iterations = 3000;
  const auto scan = find_max_step_size(pop, matching_rule_spec::baseline(), 0.1, 0.3, 0.1, opts);
  ASSERT_EQ(scan.entries.size(), 3u);
  EXPECT_TRUE(scan.any_converged);
  EXPECT_NEAR(scan.max_converging_mu, 0.3, 1e-12);
  for (const auto& e : scan.entries) EXPECT_EQ(e.status, run_status::converged);
  EXPECT_THROW(find_max_step_size(pop, matching_rule_spec::baseline(), 0.0, 0.3, 0.1),
               std::invalid_argument);
  EXPECT_THROW(find_max_step_size(pop, matching_rule_spec::baseline(), 0.1, 0.3, 0.0),
               std::invalid_argument);
}

TEST(dynamics, all_zero_ratings_rest_under_every_rule) {
  const auto pop = uniform_population(4, 0.0);
  for (const auto& rule :
       {matching_rule_spec::baseline(), matching_rule_spec::asymmetric(0.1),
        matching_rule_spec::long_range(0.5, 0.5), matching_rule_spec::rating_independent()}) {
    const auto sr = step(pop, pop.ratings, rule, 0.1);
    EXPECT_DOUBLE_EQ(sr.l1_delta, 0.0) << rule_name(rule.kind);
    const auto ce = verify_ce(pop, pop.ratings, rule, 0.1);
    EXPECT_TRUE(ce.is_equilibrium) << rule_name(rule.kind);
    const auto ineq = check_equilibrium_inequalities(pop, pop.ratings, rule, 0.1);
    EXPECT_TRUE(ineq.holds) << rule_name(rule.kind);
  }
}

TEST(dynamics, rejects_bad_arguments) {
  const auto pop = uniform_population(3, 0.5);
  EXPECT_THROW(run_dynamics(pop, matching_rule_spec::baseline(), 0.0), std::invalid_argument);
  EXPECT_THROW(run_dynamics(pop, matching_rule_spec::baseline(), 1.0), std::invalid_argument);
  population broken = pop;
  broken.ratings = rating_profile({0.5, 0.5});
  EXPECT_THROW(run_dynamics(broken, matching_rule_spec::baseline(), 0.1), std::invalid_argument);
  EXPECT_THROW(step(broken, broken.ratings, matching_rule_spec::baseline(), 0.1),
               std::invalid_argument);
  EXPECT_THROW(verify_ce(broken, broken.ratings, matching_rule_spec::baseline(), 0.1),
               std::invalid_argument);
  run_options opts;
  opts.max_iterations = 0;
  EXPECT_THROW(run_dynamics(pop, matching_rule_spec::baseline(), 0.1, opts),
               std::invalid_argument);
}

TEST(dynamics, aggressive_step_size_verdict_is_certified) {
  // Ten types under a large update weight. The exact solver lets agents land
  // on ties, so the half-step run settles fast, with the top type pairs
  // merged at shared ratings. Whatever the verdict, it must be earned: a
  // "converged" claim has to survive both independent equilibrium checks.
  const auto pop = typed_population(2, 1.0);
  run_options opts;
  opts.max_iterations = 2000;
  const auto r = run_dynamics(pop, matching_rule_spec::baseline(), 0.5, opts);
  ASSERT_EQ(r.status, run_status::converged);
  EXPECT_LT(r.iterations, 100);

  const auto ce = verify_ce(pop, r.ratings, matching_rule_spec::baseline(), 0.5, 1e-6);
  EXPECT_TRUE(ce.is_equilibrium);
  const auto iq = check_equilibrium_inequalities(pop, r.ratings, matching_rule_spec::baseline(), 0.5);
  EXPECT_TRUE(iq.holds);

  // the weakest type rests exactly on its opt-out threshold, and the two
  // strongest type pairs pool at common ratings
  const auto& th = r.ratings.ratings;
  EXPECT_NEAR(th[0], low_rating_threshold_agent(pop.agents[0], 0.5), 1e-9);
  EXPECT_DOUBLE_EQ(th[12], th[14]);  // types 7 and 8
  EXPECT_DOUBLE_EQ(th[16], th[18]);  // types 9 and 10
  EXPECT_GT(th[16], th[12]);
}

TEST(dynamics, revisit_window_flags_cycles_but_not_settling_paths) {
  // The oscillation classifier in isolation, fed synthetic histories.
  detail::revisit_window w;
  w.cap = 4;
  const double tol = 1e-8;

  // a period-two orbit: ...ab ab; the incoming "a" matches two entries back
  const std::vector<double> a{0.4, 0.1}, b{0.2, 0.3};
  const double flip = 0.4;  // |a-b| in l1, far above 10*tol
  w.push(flip, a);
  w.push(flip, b);
  EXPECT_EQ(w.match(a, flip, tol), 0) << "window not yet full";
  w.push(flip, a);
  w.push(flip, b);
  EXPECT_EQ(w.match(a, flip, tol), 2);
  // near-revisit within tolerance also counts
  EXPECT_EQ(w.match({0.4 + 2e-9, 0.1 - 3e-9}, flip, tol), 2);

  // a shrinking path never fires, even when it passes close to old states
  detail::revisit_window s;
  s.cap = 4;
  s.push(0.8, {0.5, 0.5});
  s.push(0.4, {0.3, 0.3});
  s.push(0.2, {0.2, 0.2});
  s.push(0.1, {0.15, 0.15});
  EXPECT_EQ(s.match({0.15, 0.15}, 0.05, tol), 0) << "delta still falling";

  // a stalled-but-drifting path (no revisit) stays unclassified
  detail::revisit_window d;
  d.cap = 2;
  d.push(0.1, {0.1, 0.1});
  d.push(0.1, {0.2, 0.2});
  EXPECT_EQ(d.match({0.3, 0.3}, 0.1, tol), 0);

  // quiet histories are never cycles: one tiny step inside the window vetoes
  detail::revisit_window q;
  q.cap = 2;
  q.push(5e-8, a);
  q.push(flip, b);
  EXPECT_EQ(q.match(a, flip, tol), 0);
}
