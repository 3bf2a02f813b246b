#include "mz/decision.hpp"

#include <cmath>

#include "doctest.h"
#include "support/fixtures.hpp"

using namespace mz;

namespace {

PlanResult toy_plan(const PolicyVector& improved, int chosen, double v0 = 0.1,
                    double v_mix = 0.2) {
  PlanResult plan;
  plan.improved_policy = improved;
  plan.chosen_action = Action{chosen};
  plan.root_value = v0;
  plan.improved_value = v_mix;
  return plan;
}

PolicyVector three_action_policy(double a, double b, double c) {
  PolicyVector p{};
  p[0] = a;
  p[1] = b;
  p[2] = c;
  return p;
}

}  // namespace

TEST_CASE("the switch time draw covers [0, t_end] uniformly") {
  Rng rng(8);
  SUBCASE("t_end zero always gives zero") {
    for (int i = 0; i < 20; ++i) CHECK(draw_t_start_normal(0, true, rng) == 0);
  }
  SUBCASE("exploration off always gives zero") {
    for (int i = 0; i < 20; ++i) CHECK(draw_t_start_normal(9, false, rng) == 0);
  }
  SUBCASE("histogram over 1e5 draws with t_end = 9 is uniform") {
    std::array<int, 10> hits{};
    const int trials = 100000;
    for (int i = 0; i < trials; ++i) hits[draw_t_start_normal(9, true, rng)] += 1;
    double chi2 = 0.0;
    const double expected = trials / 10.0;
    for (const int h : hits) chi2 += (h - expected) * (h - expected) / expected;
    CHECK(chi2 < 27.88);  // 99.9% quantile at 9 degrees of freedom
  }
}

TEST_CASE("the exploring distribution is the tempered improved policy") {
  SUBCASE("temperature one returns the improved policy exactly") {
    const PlanResult plan = toy_plan(three_action_policy(0.7, 0.2, 0.1), 0);
    const PolicyVector dist = exploring_distribution(plan, 1.0);
    for (int a = 0; a < 9; ++a) {
      CHECK(dist[a] == doctest::Approx(plan.improved_policy[a]).epsilon(1e-12));
    }
  }
  SUBCASE("a huge temperature flattens to uniform over the support") {
    const PlanResult plan = toy_plan(three_action_policy(0.7, 0.2, 0.1), 0);
    const PolicyVector dist = exploring_distribution(plan, 1e6);
    for (const int a : {0, 1, 2}) CHECK(std::abs(dist[a] - 1.0 / 3) < 1e-4);
    for (int a = 3; a < 9; ++a) CHECK(dist[a] == 0.0);
  }
  SUBCASE("(0.7, 0.2, 0.1) at temperature 5 matches a high-precision evaluation") {
    const PlanResult plan = toy_plan(three_action_policy(0.7, 0.2, 0.1), 0);
    const PolicyVector dist = exploring_distribution(plan, 5.0);
    long double powed[3], sum = 0.0;
    const long double probs[3] = {0.7L, 0.2L, 0.1L};
    for (int a = 0; a < 3; ++a) {
      powed[a] = std::pow(probs[a], 1.0L / 5.0L);
      sum += powed[a];
    }
    for (int a = 0; a < 3; ++a) {
      CHECK(dist[a] == doctest::Approx(static_cast<double>(powed[a] / sum)).epsilon(1e-12));
    }
  }
  SUBCASE("non-positive temperatures are rejected") {
    const PlanResult plan = toy_plan(three_action_policy(0.7, 0.2, 0.1), 0);
    CHECK_THROWS_AS(exploring_distribution(plan, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(exploring_distribution(plan, -1.0), std::invalid_argument);
  }
}

TEST_CASE("decide follows the phase boundary exactly") {
  Rng rng(4);
  const PlanResult plan = toy_plan(three_action_policy(0.5, 0.3, 0.2), 1);
  SUBCASE("switch at zero: every move is the planner's choice") {
    HybridSchedule schedule;
    schedule.t_start_normal = 0;
    for (int t = 0; t < 9; ++t) {
      const DecisionRecord record = decide(t, schedule, plan, rng);
      CHECK(!record.exploring);
      CHECK(record.action == plan.chosen_action);
      CHECK(record.p_normal == plan.improved_policy);
      CHECK(record.v_initial == plan.root_value);
      CHECK(record.v_improved == plan.improved_value);
    }
  }
  SUBCASE("switch at the horizon: every move is sampled from the exploring distribution") {
    HybridSchedule schedule;
    schedule.t_start_normal = 9;
    schedule.exploration_temperature = 5.0;
    for (int t = 0; t < 9; ++t) {
      const DecisionRecord record = decide(t, schedule, plan, rng);
      CHECK(record.exploring);
      CHECK(plan.improved_policy[record.action.cell] > 0.0);
    }
  }
  SUBCASE("no record is ever exploring at or past the switch") {
    HybridSchedule schedule;
    schedule.t_start_normal = 4;
    for (int t = 0; t < 9; ++t) {
      const DecisionRecord record = decide(t, schedule, plan, rng);
      CHECK(record.exploring == (t < 4));
    }
  }
}

TEST_CASE("exploring-phase action frequencies match the improved policy at temperature one") {
  Rng rng(99);
  const PlanResult plan = toy_plan(three_action_policy(0.6, 0.3, 0.1), 0);
  HybridSchedule schedule;
  schedule.t_start_normal = 1;
  schedule.exploration_temperature = 1.0;
  std::array<int, 9> hits{};
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) hits[decide(0, schedule, plan, rng).action.cell] += 1;
  for (const int a : {0, 1, 2}) {
    CHECK(std::abs(hits[a] / double(trials) - plan.improved_policy[a]) < 0.02);
  }
}

TEST_CASE("value targets follow the hybrid schedule") {
  // Hand-constructed five-move episode ending in a win for the last mover.
  std::vector<DecisionRecord> records(5);
  for (int t = 0; t < 5; ++t) {
    records[t].t = t;
    records[t].v_initial = 0.1 * (t + 1);   // a, b, c, ...
    records[t].v_improved = -0.1 * (t + 1);
  }

  SUBCASE("switch at zero: all targets are signed terminal rewards") {
    const auto targets = assign_value_targets(records, 1, 0, ValueTargetMode::kHybridInitial);
    REQUIRE(targets.size() == 6);
    // terminal state: the mover lost; alternating backwards from there
    CHECK(targets[5] == -1.0);
    CHECK(targets[4] == 1.0);   // the winning move
    CHECK(targets[3] == -1.0);
    CHECK(targets[2] == 1.0);
    CHECK(targets[1] == -1.0);
    CHECK(targets[0] == 1.0);
  }
  SUBCASE("a drawn game with switch zero has all-zero targets") {
    const auto targets = assign_value_targets(records, 0, 0, ValueTargetMode::kHybridInitial);
    for (const double z : targets) CHECK(z == 0.0);
  }
  SUBCASE("switch at three: stored values before, signed rewards after") {
    const auto targets = assign_value_targets(records, 1, 3, ValueTargetMode::kHybridInitial);
    CHECK(targets[0] == doctest::Approx(0.1));
    CHECK(targets[1] == doctest::Approx(0.2));
    CHECK(targets[2] == doctest::Approx(0.3));
    CHECK(targets[3] == -1.0);
    CHECK(targets[4] == 1.0);
    CHECK(targets[5] == -1.0);
  }
  SUBCASE("the improved-value mode substitutes the planner's value before the switch") {
    const auto targets = assign_value_targets(records, 1, 3, ValueTargetMode::kHybridImproved);
    CHECK(targets[0] == doctest::Approx(-0.1));
    CHECK(targets[1] == doctest::Approx(-0.2));
    CHECK(targets[2] == doctest::Approx(-0.3));
    CHECK(targets[3] == -1.0);
  }
  SUBCASE("plain mode uses the terminal reward everywhere") {
    const auto targets = assign_value_targets(records, 1, 7, ValueTargetMode::kPlain);
    CHECK(targets[0] == 1.0);
    CHECK(targets[1] == -1.0);
    CHECK(targets[2] == 1.0);
  }
  SUBCASE("a switch past the realized end leaves the whole episode on stored values") {
    const auto targets = assign_value_targets(records, 1, 9, ValueTargetMode::kHybridInitial);
    for (int t = 0; t < 5; ++t) CHECK(targets[t] == doctest::Approx(0.1 * (t + 1)));
    CHECK(targets[5] == -1.0);  // the terminal state itself keeps its truth
  }
  SUBCASE("missing stored values are rejected") {
    std::vector<DecisionRecord> broken = records;
    broken[2].v_initial = std::nan("");
    CHECK_THROWS_AS(assign_value_targets(broken, 1, 3, ValueTargetMode::kHybridInitial),
                    std::invalid_argument);
  }
}

TEST_CASE("targets at and after the switch do not depend on the exploring prefix") {
  // Two episodes sharing the suffix from t >= 3 but with different prefixes.
  std::vector<DecisionRecord> a(6), b(6);
  for (int t = 0; t < 6; ++t) {
    a[t].t = b[t].t = t;
    a[t].v_initial = 0.11 * t;
    b[t].v_initial = -0.2 - 0.05 * t;  // a different exploring history
    a[t].action = Action{t};
    b[t].action = Action{8 - t};
  }
  const auto za = assign_value_targets(a, 1, 3, ValueTargetMode::kHybridInitial);
  const auto zb = assign_value_targets(b, 1, 3, ValueTargetMode::kHybridInitial);
  for (int t = 3; t <= 6; ++t) CHECK(za[t] == zb[t]);
}

TEST_CASE("the exploring distribution matches the direct sigma-form softmax") {
  // The two published forms of the tempered policy — softmax(ln(p)/T) and
  // softmax((logits + sigma(q))/T) — must agree through logit equivalence.
  const testing::OracleEngine engine;
  Rng rng(1234);
  for (const double temperature : {1.0, 2.5, 5.0}) {
    for (int trial = 0; trial < 25; ++trial) {
      GameState state = initial_state();
      const int depth = static_cast<int>(rng.index(6));
      for (int d = 0; d < depth && !is_terminal(state); ++d) {
        const auto legal = legal_actions(state);
        state = apply_action(state, legal[rng.index(legal.size())]);
      }
      if (is_terminal(state)) continue;
      PlanConfig cfg;
      cfg.dirichlet_fraction = 0.0;
      const PlanResult result = plan(engine, observe(state), legal_actions(state), cfg, rng);
      const PolicyVector tempered = exploring_distribution(result, temperature);

      // Reconstruct softmax((logits + sigma(q_completed))/T) from scratch:
      // the noise-free search prior is the masked log-softmax of the raw
      // network logits, and the planner reports its q-normalization bounds.
      const NetworkOutput raw = engine.initial_inference(observe(state));
      const auto legal = legal_actions(state);
      std::array<bool, 9> mask{};
      for (const Action a : legal) mask[a.cell] = true;
      double prior_max = -std::numeric_limits<double>::infinity(), prior_sum = 0.0;
      for (const Action a : legal) prior_max = std::max(prior_max, raw.policy_logits[a.cell]);
      std::array<double, 9> prior{};
      for (const Action a : legal) {
        prior[a.cell] = std::exp(raw.policy_logits[a.cell] - prior_max);
        prior_sum += prior[a.cell];
      }
      int max_visit = 0;
      for (int a = 0; a < 9; ++a) max_visit = std::max(max_visit, result.visit_counts[a]);
      MinMaxStats stats;
      stats.update(result.q_lo);
      stats.update(result.q_hi);
      std::array<double, 9> direct{};
      double score_max = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < 9; ++a) {
        if (!mask[a]) continue;
        direct[a] = (std::log(prior[a] / prior_sum) +
                     sigma(stats.normalize(result.completed_q[a]), max_visit, cfg)) /
                    temperature;
        score_max = std::max(score_max, direct[a]);
      }
      double sum = 0.0;
      for (int a = 0; a < 9; ++a) {
        if (mask[a]) {
          direct[a] = std::exp(direct[a] - score_max);
          sum += direct[a];
        } else {
          direct[a] = 0.0;
        }
      }
      for (int a = 0; a < 9; ++a) {
        CHECK(std::abs(tempered[a] - direct[a] / sum) < 1e-9);
      }
    }
  }
}

TEST_CASE("below unit temperature the probability ratios are amplified") {
  Rng rng(31);
  for (int trial = 0; trial < 10000; ++trial) {
    // random distribution over a random support of >= 2 actions
    PolicyVector p{};
    const int support = 2 + static_cast<int>(rng.index(8));
    double sum = 0.0;
    for (int a = 0; a < support; ++a) {
      p[a] = rng.uniform_positive();
      sum += p[a];
    }
    for (auto& v : p) v /= sum;
    int a1 = 0, a2 = 1;
    for (int a = 0; a < support; ++a) {
      if (p[a] > p[a1]) a1 = a;
      if (p[a] < p[a2]) a2 = a;
    }
    if (p[a1] <= p[a2]) continue;  // need strictly ordered probabilities
    const double t = 0.05 + 0.9 * rng.uniform();  // T in (0, 1)
    const PlanResult plan = toy_plan(p, 0);
    const PolicyVector tempered = exploring_distribution(plan, t);
    CHECK(tempered[a1] / tempered[a2] > p[a1] / p[a2]);
  }
}
