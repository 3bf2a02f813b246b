#pragma once

#include <vector>

#include "mz/game.hpp"
#include "mz/planner.hpp"
#include "mz/rng.hpp"

namespace mz {

// Hybrid exploration policy: act by a temperature-flattened improved policy
// until a randomly drawn switch time, then act by the planner's choice, and
// stamp episodes with the matching value-target schedule.

struct HybridSchedule {
  int t_start_normal = 0;
  double exploration_temperature = 5.0;
  int t_end = kMaxGameLength;
  bool exploration_on = true;
};

struct DecisionRecord {
  int t = 0;
  bool exploring = false;  // true iff t < t_start_normal
  Action action;
  PolicyVector p_normal{};   // improved policy; the policy training target
  double v_initial = 0.0;    // root value v^0 of the acting model
  double v_improved = 0.0;   // planner's v_mix, kept for the ablation target mode
};

// Uniform integer in [0, t_end]; 0 always when exploration is off.
int draw_t_start_normal(int t_end, bool exploration_on, Rng& rng);

// softmax(ln(p_normal) / T) over the support of the improved policy.
// Throws on T <= 0.
PolicyVector exploring_distribution(const PlanResult& plan, double temperature);

DecisionRecord decide(int t, const HybridSchedule& schedule, const PlanResult& plan, Rng& rng);

enum class ValueTargetMode {
  kHybridInitial,   // pre-switch targets keep the acting model's v^0
  kHybridImproved,  // pre-switch targets use the planner's improved value
  kPlain,           // signed terminal reward everywhere
};

// Value targets for t = 0..L where L = records.size(); index L is the
// terminal state. Post-switch targets propagate the terminal reward backward
// with a per-ply sign flip; pre-switch targets follow the mode.
std::vector<double> assign_value_targets(const std::vector<DecisionRecord>& records,
                                         int reward_to_last_mover, int t_start_normal,
                                         ValueTargetMode mode);

}  // namespace mz
