// Walkthrough: a four-agent market with two capability levels, traced from
// the first conjectured best response to the verified rest point.
//
// Build with the library target, then run without arguments. Every section
// prints what the library computed and, where it helps, why.

#include <algorithm>
#include <cstdio>

#include "peermatch/dynamics.hpp"

using namespace peermatch;

namespace {

agent_spec reviewer(int type_id, double skill) {
  agent_spec a;
  a.type_id = type_id;
  a.delta = 0.8;                                       // patience
  a.alpha = skill;                                     // chance of being read
  a.cost = function_spec::power_cost(1.0, 2.0);        // c(e) = e^2
  a.quality = function_spec::linear_quality(skill);    // q(e) = skill * e
  a.benefit = function_spec::quadratic_benefit(-1.0, 2.0);  // b(r) = -r^2 + 2r
  return a;
}

void print_profile(const char* label, const population& pop, const std::vector<double>& efforts) {
  std::printf("%s\n", label);
  for (std::size_t i = 0; i < pop.agents.size(); ++i)
    std::printf("  agent %zu (type %d): rating %.6f  effort %.6f\n", i,
                pop.agents[i].type_id, pop.ratings[i], efforts[i]);
}

}  // namespace

int main() {
  // two weak reviewers and two strong ones, everyone starting at 0.6
  const auto pop =
      make_population({reviewer(1, 0.6), reviewer(2, 1.0)}, {2, 2}, {0.6, 0.6});
  const auto rule = matching_rule_spec::baseline();
  const double mu = 0.2;  // how hard one review drags the running rating

  std::printf("== the market one agent conjectures ==\n");
  const auto d = distribution(pop.ratings);
  std::printf("distinct ratings (descending):");
  for (int k = 0; k < d.K(); ++k)
    std::printf("  %.4f x%d", d.values[k], d.count_at(k + 1));
  std::printf("\n");

  // Agent 0 plans against the other three. Its prospective rating after one
  // review is (1-mu)*0.6 + mu*q(e), so effort decides where it lands among
  // the others' ratings -- and the matching rule decides what that is worth.
  const auto others = remove_one(d, d.rank_of(pop.ratings[0]));
  const auto br = best_response(pop.agents[0], pop.ratings[0], others, rule, mu);
  std::printf("\n== agent 0's best response ==\n");
  std::printf("effort %.6f (%s), conjectured payoff %.6f\n", br.effort, br.segment.c_str(),
              br.value);
  const double landing = (1.0 - mu) * pop.ratings[0] + mu * eval(pop.agents[0].quality, br.effort);
  std::printf("prospective rating %.6f against the tie at %.6f\n", landing, others.values[0]);

  std::printf("\n== one synchronous slot ==\n");
  const auto sr = step(pop, pop.ratings, rule, mu);
  population after = pop;
  after.ratings = sr.ratings_next;
  print_profile("after one update:", after, sr.efforts);
  std::printf("l1 movement %.6f\n", sr.l1_delta);

  std::printf("\n== iterate to rest ==\n");
  run_options opts;
  opts.observer = [](const step_view& v) {
    if (v.t % 10 == 0)
      std::printf("  t=%3ld  top %.6f  bottom %.6f  moved %.2e\n", v.t,
                  v.ratings[2], v.ratings[0], v.l1_delta);
  };
  const auto r = run_dynamics(pop, rule, mu, opts);
  std::printf("%s after %ld slots\n", run_status_name(r.status), r.iterations);
  population rest = pop;
  rest.ratings = r.ratings;
  print_profile("rest point:", rest, r.efforts);

  // two independent certificates: re-solving every agent's best response,
  // and scanning each agent's deviation payoffs along the benefit curve
  const auto ce = verify_ce(pop, r.ratings, rule, mu);
  const auto iq = check_equilibrium_inequalities(pop, r.ratings, rule, mu);
  std::printf("best-response check: %s (max residual %.2e)\n", ce.is_equilibrium ? "pass" : "FAIL",
              ce.max_rating_residual);
  std::printf("deviation-payoff check: %s (max improvement %.2e)\n", iq.holds ? "pass" : "FAIL",
              iq.max_violation);

  // Each type has a hold threshold: the highest rating at which climbing
  // back to the common start still pays off. Start everyone below all of
  // them and nothing ever moves -- effort exactly reproduces the start, a
  // market stuck reviewing at the starting quality forever.
  std::printf("\n== the low-rating trap ==\n");
  const auto thresholds = low_rating_threshold_each(pop.agents, mu);
  std::printf("hold thresholds: weak %.6f, strong %.6f\n", thresholds[0], thresholds[2]);
  const double lowest = *std::min_element(thresholds.begin(), thresholds.end());
  const auto frozen =
      make_population({reviewer(1, 0.6), reviewer(2, 1.0)}, {2, 2}, {0.9 * lowest, 0.9 * lowest});
  const auto fr = run_dynamics(frozen, rule, mu);
  std::printf("start at %.6f: %s after %ld slots, rating still %.6f\n", 0.9 * lowest,
              run_status_name(fr.status), fr.iterations, fr.ratings[0]);

  // In between, only the types whose threshold clears the start hold on --
  // and even they get dragged once the market thins out beneath them.
  const double between = 0.9 * low_rating_threshold(pop.agents, mu);
  const auto mixed =
      make_population({reviewer(1, 0.6), reviewer(2, 1.0)}, {2, 2}, {between, between});
  const auto mr = run_dynamics(mixed, rule, mu);
  std::printf("start at %.6f: weak sink to %.6f (their threshold), strong rest at %.6f\n",
              between, mr.ratings[0], mr.ratings[2]);
  return 0;
}
