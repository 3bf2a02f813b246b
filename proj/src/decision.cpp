#include "mz/decision.hpp"

#include <cmath>
#include <stdexcept>

namespace mz {

int draw_t_start_normal(int t_end, bool exploration_on, Rng& rng) {
  if (t_end < 0) throw std::invalid_argument("t_end must be >= 0");
  if (!exploration_on) return 0;
  return rng.uniform_int(0, t_end);
}

PolicyVector exploring_distribution(const PlanResult& plan, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("exploration temperature must be > 0");
  PolicyVector out{};
  double max = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < kNumCells; ++a) {
    if (plan.improved_policy[a] > 0.0) {
      max = std::max(max, std::log(plan.improved_policy[a]) / temperature);
    }
  }
  double sum = 0.0;
  for (int a = 0; a < kNumCells; ++a) {
    if (plan.improved_policy[a] > 0.0) {
      out[a] = std::exp(std::log(plan.improved_policy[a]) / temperature - max);
      sum += out[a];
    }
  }
  for (auto& p : out) p /= sum;
  return out;
}

DecisionRecord decide(int t, const HybridSchedule& schedule, const PlanResult& plan, Rng& rng) {
  DecisionRecord record;
  record.t = t;
  record.exploring = t < schedule.t_start_normal;
  record.p_normal = plan.improved_policy;
  record.v_initial = plan.root_value;
  record.v_improved = plan.improved_value;
  if (record.exploring) {
    const PolicyVector dist = exploring_distribution(plan, schedule.exploration_temperature);
    record.action = Action{static_cast<int>(
        rng.categorical(std::vector<double>(dist.begin(), dist.end())))};
  } else {
    record.action = plan.chosen_action;
  }
  return record;
}

std::vector<double> assign_value_targets(const std::vector<DecisionRecord>& records,
                                         int reward_to_last_mover, int t_start_normal,
                                         ValueTargetMode mode) {
  const int length = static_cast<int>(records.size());
  for (int t = 0; t < length; ++t) {
    if (records[t].t != t || !std::isfinite(records[t].v_initial)) {
      throw std::invalid_argument("episode is missing stored root values at t=" +
                                  std::to_string(t));
    }
  }
  std::vector<double> targets(length + 1, 0.0);
  // Terminal state, from the nominal mover's perspective: the opponent just
  // completed a line (-1) or the game drew (0).
  targets[length] = -static_cast<double>(reward_to_last_mover);
  const int switch_time = mode == ValueTargetMode::kPlain ? 0 : std::min(t_start_normal, length);
  for (int t = length - 1; t >= switch_time; --t) targets[t] = -targets[t + 1];
  for (int t = 0; t < switch_time; ++t) {
    targets[t] = mode == ValueTargetMode::kHybridImproved ? records[t].v_improved
                                                          : records[t].v_initial;
  }
  return targets;
}

}  // namespace mz
