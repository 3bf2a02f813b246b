#include "mz/planner.hpp"

#include <cmath>
#include <map>

#include "doctest.h"
#include "mz/oracle.hpp"
#include "support/fixtures.hpp"

using namespace mz;

namespace {

PlanConfig eval_plan(int simulations, int candidates) {
  PlanConfig cfg;
  cfg.simulations = simulations;
  cfg.initial_candidates = candidates;
  cfg.dirichlet_fraction = 0.0;
  cfg.gumbel_zero = true;
  return cfg;
}

const oracle::DecisionGraph& graph() {
  static const oracle::DecisionGraph g = oracle::build_graph();
  return g;
}

}  // namespace

TEST_CASE("sigma is strictly increasing in q for any visit context") {
  PlanConfig cfg;
  for (const int max_visit : {0, 1, 7, 50}) {
    double previous = -1e18;
    for (double q = -1.0; q <= 1.0; q += 0.125) {
      const double s = sigma(q, max_visit, cfg);
      CHECK(s > previous);
      previous = s;
    }
  }
}

TEST_CASE("sigma with zero scale vanishes and the improved policy falls back to the prior") {
  PlanConfig cfg;
  cfg.c_scale = 0.0;
  CHECK(sigma(0.73, 12, cfg) == 0.0);

  SearchNode node;
  node.valid.fill(true);
  for (int a = 0; a < 9; ++a) node.prior_logits[a] = 0.1 * a;
  node.visit_count[3] = 4;
  node.q_estimate[3] = 0.9;
  MinMaxStats stats;
  stats.update(-0.5);
  stats.update(0.9);
  const auto policy = improved_policy(node, cfg, stats, 1.0);
  const auto expected = net::softmax(
      std::vector<double>(node.prior_logits.begin(), node.prior_logits.end()));
  for (int a = 0; a < 9; ++a) CHECK(policy[a] == doctest::Approx(expected[a]).epsilon(1e-12));
}

TEST_CASE("sigma frozen-value spot check") {
  PlanConfig cfg;
  cfg.c_visit = 20;
  cfg.c_scale = 1.0;
  CHECK(sigma(0.5, 0, cfg) == doctest::Approx(10.0));
}

TEST_CASE("v_mix equals the raw value with no visits") {
  SearchNode node;
  node.valid.fill(true);
  node.value = 0.37;
  CHECK(v_mix(node) == 0.37);
}

TEST_CASE("v_mix approaches the visited child's q in the large-visit limit") {
  SearchNode node;
  node.valid.fill(true);
  node.value = -0.8;
  node.visit_count[2] = 1000000;
  node.q_estimate[2] = 0.6;
  CHECK(v_mix(node) == doctest::Approx(0.6).epsilon(1e-5));
}

TEST_CASE("v_mix matches a hand computation with two visited children") {
  SearchNode node;
  node.valid.fill(false);
  node.valid[0] = node.valid[1] = node.valid[2] = true;
  node.prior_logits[0] = std::log(0.5);
  node.prior_logits[1] = std::log(0.3);
  node.prior_logits[2] = std::log(0.2);
  node.value = 0.1;
  node.visit_count[0] = 3;
  node.q_estimate[0] = 0.4;
  node.visit_count[1] = 1;
  node.q_estimate[1] = -0.2;
  // weighted visited q = (0.5*0.4 + 0.3*(-0.2)) / 0.8 = 0.175
  // v_mix = (0.1 + 4 * 0.175) / 5 = 0.16
  CHECK(v_mix(node) == doctest::Approx(0.16).epsilon(1e-12));
}

TEST_CASE("completed q fills unvisited actions with the mixed value") {
  SearchNode node;
  node.valid.fill(true);
  node.value = 0.25;
  SUBCASE("no child visited: every entry is the root network value") {
    const auto completed = completed_q(node);
    for (int a = 0; a < 9; ++a) CHECK(completed[a] == 0.25);
  }
  SUBCASE("all children visited: entries are the empirical estimates") {
    for (int a = 0; a < 9; ++a) {
      node.visit_count[a] = 1 + a;
      node.q_estimate[a] = 0.1 * a - 0.4;
    }
    const auto completed = completed_q(node);
    for (int a = 0; a < 9; ++a) CHECK(completed[a] == doctest::Approx(0.1 * a - 0.4));
  }
  SUBCASE("mixed case on a three-action toy matches the hand-worked fill") {
    node.valid.fill(false);
    node.valid[0] = node.valid[1] = node.valid[2] = true;
    node.prior_logits[0] = std::log(0.5);
    node.prior_logits[1] = std::log(0.3);
    node.prior_logits[2] = std::log(0.2);
    node.value = 0.1;
    node.visit_count[0] = 3;
    node.q_estimate[0] = 0.4;
    node.visit_count[1] = 1;
    node.q_estimate[1] = -0.2;
    const auto completed = completed_q(node);
    CHECK(completed[0] == doctest::Approx(0.4));
    CHECK(completed[1] == doctest::Approx(-0.2));
    CHECK(completed[2] == doctest::Approx(0.16));  // v_mix from the toy above
  }
}

TEST_CASE("non-root selection takes the improved-policy argmax when nothing is visited") {
  SearchNode node;
  node.valid.fill(true);
  for (int a = 0; a < 9; ++a) node.prior_logits[a] = a == 5 ? 2.0 : 0.0;
  node.value = 0.0;
  PlanConfig cfg;
  MinMaxStats stats;
  CHECK(non_root_select(node, cfg, stats) == 5);
}

TEST_CASE("non-root visit counts track the improved-policy proportions") {
  SearchNode node;
  node.valid.fill(true);
  // fixed completed q (all equal) so the improved policy stays the prior
  for (int a = 0; a < 9; ++a) node.prior_logits[a] = 0.35 * a - 1.0;
  node.value = 0.0;
  PlanConfig cfg;
  MinMaxStats stats;
  const auto target = improved_policy(node, cfg, stats, 1.0);
  for (int step = 0; step < 100; ++step) {
    const int a = non_root_select(node, cfg, stats);
    node.visit_count[a] += 1;  // q estimates stay at the shared default
    node.q_estimate[a] = 0.0;
  }
  for (int a = 0; a < 9; ++a) {
    CHECK(std::abs(node.visit_count[a] / 100.0 - target[a]) <= 0.02);
  }
}

TEST_CASE("non-root selection breaks exact ties by the lowest action index") {
  SearchNode node;
  node.valid.fill(true);
  node.value = 0.0;  // uniform priors, no visits: all scores equal
  PlanConfig cfg;
  MinMaxStats stats;
  CHECK(non_root_select(node, cfg, stats) == 0);
}

TEST_CASE("dirichlet mixing keeps the distribution contract") {
  Rng rng(42);
  const std::vector<Action> legal{{0}, {3}, {4}, {8}};
  PolicyVector priors{};
  priors[0] = 0.4;
  priors[3] = 0.3;
  priors[4] = 0.2;
  priors[8] = 0.1;

  SUBCASE("zero fraction returns the priors untouched") {
    const PolicyVector mixed = mix_dirichlet(priors, legal, 1.2, 0.0, rng);
    CHECK(mixed == priors);
  }
  SUBCASE("full fraction with a huge alpha concentrates on uniform") {
    const PolicyVector mixed = mix_dirichlet(priors, legal, 1e6, 1.0, rng);
    for (const Action a : legal) CHECK(mixed[a.cell] == doctest::Approx(0.25).epsilon(1e-2));
  }
  SUBCASE("output is a distribution over the legal support") {
    for (int trial = 0; trial < 200; ++trial) {
      const PolicyVector mixed = mix_dirichlet(priors, legal, 1.2, 0.25, rng);
      double sum = 0.0;
      for (int a = 0; a < 9; ++a) {
        CHECK(mixed[a] >= 0.0);
        if (a != 0 && a != 3 && a != 4 && a != 8) CHECK(mixed[a] == 0.0);
        sum += mixed[a];
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("with the exact oracle the eager plan picks a minimax-optimal move on every "
          "decision node") {
  const testing::OracleEngine engine;
  const auto& g = graph();
  for (const int n : {9, 20}) {
    const PlanConfig cfg = eval_plan(n, 9);
    for (const int32_t id : g.relevant_nodes()) {
      const auto& node = g.node(id);
      Rng rng(1);
      const PlanResult result =
          plan(engine, observe(node.state), legal_actions(node.state), cfg, rng);
      CHECK(g.is_optimal(id, result.chosen_action));
    }
  }
}

TEST_CASE("oracle-driven plans stay optimal across simulation budgets") {
  const testing::OracleEngine engine;
  const auto& g = graph();
  const auto relevant = g.relevant_nodes();
  for (const int n : {9, 10, 13, 16, 25, 40}) {
    const PlanConfig cfg = eval_plan(n, 9);
    for (size_t i = 0; i < relevant.size(); i += 37) {
      const auto& node = g.node(relevant[i]);
      Rng rng(7);
      const PlanResult result =
          plan(engine, observe(node.state), legal_actions(node.state), cfg, rng);
      CHECK(g.is_optimal(relevant[i], result.chosen_action));
    }
  }
}

TEST_CASE("a single legal action yields that action and a point-mass policy") {
  const testing::OracleEngine engine;
  // Drive an optimal game to its final move: one empty cell remains.
  GameState state = initial_state();
  const auto game = testing::optimal_game();
  for (size_t i = 0; i + 1 < game.size(); ++i) state = apply_action(state, game[i]);
  const auto legal = legal_actions(state);
  REQUIRE(legal.size() == 1);
  PlanConfig cfg = eval_plan(20, 4);
  Rng rng(3);
  const PlanResult result = plan(engine, observe(state), legal, cfg, rng);
  CHECK(result.chosen_action == legal.front());
  CHECK(result.improved_policy[legal.front().cell] == doctest::Approx(1.0));
  double sum = 0.0;
  for (const double p : result.improved_policy) sum += p;
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("identical seeds give identical plans") {
  const testing::OracleEngine engine;
  GameState state = apply_action(initial_state(), Action{4});
  PlanConfig cfg;
  cfg.simulations = 20;
  cfg.initial_candidates = 4;
  cfg.dirichlet_fraction = 0.25;
  for (const bool eager : {false, true}) {
    cfg.gumbel_zero = eager;
    Rng rng_a(99), rng_b(99);
    const PlanResult a = plan(engine, observe(state), legal_actions(state), cfg, rng_a);
    const PlanResult b = plan(engine, observe(state), legal_actions(state), cfg, rng_b);
    CHECK(a.chosen_action == b.chosen_action);
    CHECK(a.improved_policy == b.improved_policy);
    CHECK(a.improved_value == b.improved_value);
    CHECK(a.visit_counts == b.visit_counts);
  }
}

TEST_CASE("the simulation budget is honored exactly") {
  const testing::OracleEngine inner;
  const testing::CountingEngine engine(inner);
  GameState state = apply_action(initial_state(), Action{0});
  int expected_initial = 0, expected_recurrent = 0;
  for (const int n : {4, 9, 20, 33}) {
    for (const int m : {2, 4, 9}) {
      if (n < m) continue;
      PlanConfig cfg;
      cfg.simulations = n;
      cfg.initial_candidates = m;
      cfg.dirichlet_fraction = 0.25;
      Rng rng(n * 100 + m);
      plan(engine, observe(state), legal_actions(state), cfg, rng);
      expected_initial += 1;
      expected_recurrent += n;
      CHECK(engine.initial_calls == expected_initial);
      CHECK(engine.recurrent_calls == expected_recurrent);
    }
  }
}

TEST_CASE("the improved policy is exactly zero on illegal actions") {
  const testing::OracleEngine engine;
  Rng rng(17);
  GameState state = initial_state();
  state = apply_action(state, Action{4});
  state = apply_action(state, Action{0});
  state = apply_action(state, Action{8});
  PlanConfig cfg;
  cfg.dirichlet_fraction = 0.25;
  const PlanResult result = plan(engine, observe(state), legal_actions(state), cfg, rng);
  CHECK(result.improved_policy[4] == 0.0);
  CHECK(result.improved_policy[0] == 0.0);
  CHECK(result.improved_policy[8] == 0.0);
  double sum = 0.0;
  for (const double p : result.improved_policy) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(result.improved_value >= -1.0);
  CHECK(result.improved_value <= 1.0);
}

TEST_CASE("gumbel argmax over logits samples the softmax distribution") {
  // three-action toy, chi-square against the softmax probabilities
  const std::vector<double> logits{0.3, -0.7, 1.1};
  const auto probs = net::softmax(logits);
  Rng rng(314159);
  const int trials = 100000;
  std::array<int, 3> hits{};
  for (int i = 0; i < trials; ++i) {
    int best = 0;
    double best_score = -1e18;
    for (int a = 0; a < 3; ++a) {
      const double score = logits[a] + rng.gumbel();
      if (score > best_score) {
        best_score = score;
        best = a;
      }
    }
    hits[best] += 1;
  }
  double chi2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double expected = probs[a] * trials;
    chi2 += (hits[a] - expected) * (hits[a] - expected) / expected;
  }
  CHECK(chi2 < 13.8);  // 99.9% quantile at 2 degrees of freedom
}

TEST_CASE("below a computable temperature the tempered argmax equals the zero-noise argmax") {
  Rng rng(2718);
  int checked = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::array<double, 9> scores{}, g{};
    for (int a = 0; a < 9; ++a) {
      scores[a] = 4.0 * rng.uniform() - 2.0;  // logits + sigma(q), combined
      g[a] = rng.gumbel();
    }
    const auto argmax = [](const std::array<double, 9>& v) {
      return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    };
    const int best = argmax(scores);

    // Largest T that still guarantees the noise cannot flip the winner.
    double threshold = 1e18;
    for (int a = 0; a < 9; ++a) {
      if (a == best || g[a] <= g[best]) continue;
      threshold = std::min(threshold, (scores[best] - scores[a]) / (g[a] - g[best]));
    }
    if (threshold == 1e18) threshold = 1.0;  // noise already agrees at any T
    const double t = threshold / 2.0;

    std::array<double, 9> tempered{};
    std::array<double, 9> zero_noise{};
    for (int a = 0; a < 9; ++a) {
      tempered[a] = g[a] + scores[a] / t;
      zero_noise[a] = scores[a];
    }
    CHECK(argmax(tempered) == argmax(zero_noise));
    ++checked;
  }
  CHECK(checked == 10000);
}

TEST_CASE("with exact q values the improved policy never loses expected value") {
  // Exhaustive over the decision nodes, at prior temperatures 1 and 0.5.
  const auto& g = graph();
  PlanConfig cfg;
  Rng rng(577);
  for (const double temperature : {1.0, 0.5}) {
    for (const int32_t id : g.relevant_nodes()) {
      const auto& node = g.node(id);
      SearchNode view;
      view.valid.fill(false);
      view.value = node.value;
      int max_visit = 0;
      for (const Action a : legal_actions(node.state)) {
        view.valid[a.cell] = true;
        view.prior_logits[a.cell] = 2.0 * rng.uniform() - 1.0;  // arbitrary prior
        view.visit_count[a.cell] = 1 + static_cast<int>(rng.index(5));
        view.q_estimate[a.cell] = g.q_value(id, a);
        max_visit = std::max(max_visit, view.visit_count[a.cell]);
      }
      MinMaxStats stats;
      stats.update(-1.0);
      stats.update(1.0);
      const auto improved = improved_policy(view, cfg, stats, temperature);

      // tempered prior baseline: softmax(logits / T) over the legal actions
      double max_logit = -1e18, prior_sum = 0.0, improved_value = 0.0, prior_value = 0.0;
      std::array<double, 9> prior{};
      for (int a = 0; a < 9; ++a) {
        if (view.valid[a]) max_logit = std::max(max_logit, view.prior_logits[a] / temperature);
      }
      for (int a = 0; a < 9; ++a) {
        if (!view.valid[a]) continue;
        prior[a] = std::exp(view.prior_logits[a] / temperature - max_logit);
        prior_sum += prior[a];
      }
      for (int a = 0; a < 9; ++a) {
        if (!view.valid[a]) continue;
        prior[a] /= prior_sum;
        improved_value += improved[a] * view.q_estimate[a];
        prior_value += prior[a] * view.q_estimate[a];
      }
      CHECK(improved_value >= prior_value - 1e-12);
    }
  }
}
