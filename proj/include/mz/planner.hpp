#pragma once

#include <array>
#include <limits>
#include <vector>

#include "mz/game.hpp"
#include "mz/model.hpp"
#include "mz/rng.hpp"

namespace mz {

// Gumbel sequential-halving planner with deterministic non-root selection.
// One planner call builds a fresh in-mind tree, spends exactly
// `simulations` recurrent-inference calls, and returns the chosen action,
// the improved policy and the improved (mixed) value.

struct PlanConfig {
  int simulations = 20;        // n
  int initial_candidates = 4;  // m, clipped to the number of legal actions
  double c_visit = 20.0;
  double c_scale = 1.0;
  double dirichlet_alpha = 1.2;
  double dirichlet_fraction = 0.25;
  double prior_temperature = 1.0;  // divides logits and sigma at the root
  bool gumbel_zero = false;        // eager playout: g = 0

  void validate() const;
};

// Root or in-mind node statistics, as consumed by the q-completion helpers.
struct SearchNode {
  std::array<double, kNumCells> prior_logits{};  // -inf marks masked actions
  std::array<bool, kNumCells> valid{};
  double value = 0.0;  // network value from this node's perspective
  std::array<int, kNumCells> visit_count{};
  std::array<double, kNumCells> q_estimate{};  // empirical q where visit_count > 0
};

struct PlanResult {
  Action chosen_action;
  std::array<double, kNumCells> improved_policy{};  // exactly 0 on illegal actions
  double improved_value = 0.0;                      // v_mix at the root
  double root_value = 0.0;                          // raw network value v^0
  std::array<int, kNumCells> visit_counts{};
  std::array<double, kNumCells> completed_q{};  // pre-normalization completed values
  double q_lo = 0.0, q_hi = 0.0;                // tree-wide q normalization bounds
  int recurrent_calls = 0;
};

// Running min-max bounds of the q values observed in the current tree.
struct MinMaxStats {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void update(double q) {
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  // Linear map of [lo, hi] onto [0, 1]; degenerate spread maps to 0.5.
  double normalize(double q) const {
    if (!(hi > lo)) return 0.5;
    return (q - lo) / (hi - lo);
  }
};

// sigma(q) = (c_visit + max_visit) * c_scale * q; monotonically increasing in q.
double sigma(double q, int max_visit, const PlanConfig& cfg);

// Visit-weighted interpolation between the node's network value and the
// prior-weighted empirical values of its visited children.
double v_mix(const SearchNode& node);

// Empirical q where visited, v_mix everywhere else (valid actions only).
std::array<double, kNumCells> completed_q(const SearchNode& node);

// softmax((prior_logits + sigma(normalized completed q)) / temperature) over
// the node's valid actions.
std::array<double, kNumCells> improved_policy(const SearchNode& node, const PlanConfig& cfg,
                                              const MinMaxStats& stats, double temperature);

// Deterministic non-root rule: argmax of improved_policy(a) - N(a)/(1 + sum N),
// ties broken by the lowest action index.
int non_root_select(const SearchNode& node, const PlanConfig& cfg, const MinMaxStats& stats);

// (1 - fraction) * priors + fraction * Dirichlet(alpha), supported on the
// legal actions only, renormalized.
PolicyVector mix_dirichlet(const PolicyVector& priors, const std::vector<Action>& legal,
                           double alpha, double fraction, Rng& rng);

PlanResult plan(const InferenceEngine& engine, const Observation& root_obs,
                const std::vector<Action>& legal, const PlanConfig& cfg, Rng& rng);

}  // namespace mz
