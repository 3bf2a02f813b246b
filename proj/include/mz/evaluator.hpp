#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mz/experience.hpp"
#include "mz/model.hpp"
#include "mz/oracle.hpp"
#include "mz/planner.hpp"

namespace mz {

// Audits a trained model against the solved decision graph: every relevant
// decision node is tested once per (player, mode), where mode I takes the raw
// initial-inference argmax and mode P runs a full plan.

struct EvalConfig {
  PlanConfig plan;                 // dirichlet_fraction is forced to 0 for audits
  bool gumbel_sample = true;       // g ~ Gumbel, averaged over gumbel_seeds passes
  int gumbel_seeds = 3;
  double temperature = 0.0;        // intuition-mode selection; 0 = argmax
  uint64_t seed = 0;               // base of the fixed evaluation seed set
  int threads = 1;

  uint64_t hash() const;
  std::string label() const { return gumbel_sample ? "gumbel" : "eager"; }
};

oracle::BadDecisionCount audit_model(const Model& model, const oracle::DecisionGraph& graph,
                                     const EvalConfig& eval);

// Intuition-mode action: argmax of the initial-inference policy over the
// legal actions (or a tempered draw when temperature > 0).
Action intuition_move(const Model& model, const GameState& state, double temperature, Rng& rng);

// Planning-mode action for one audited playout.
Action planned_move(const Model& model, const GameState& state, const PlanConfig& plan,
                    bool gumbel_sample, Rng& rng);

// H_0^0: policy entropy of the initial inference at the empty board.
double entropy_at_empty_board(const Model& model);

// Piecewise value series: initial inference per step before t_start, then the
// recurrent continuation of the t_start latent. Past the end of the action
// sequence the last real action is repeated as filler.
struct ValueTrajectory {
  int t_start = 0;
  std::vector<double> values;  // indices t' = 0 .. 2 * horizon
};

ValueTrajectory value_trajectory(const Model& model, const std::vector<Action>& actions,
                                 int t_start);

// Mean |v^0 - minimax| over the exploring-phase records of the given
// episodes; empty when no exploring-phase decision exists.
std::optional<double> exploring_value_error(const std::vector<Episode>& episodes,
                                            const oracle::DecisionGraph& graph);

}  // namespace mz
