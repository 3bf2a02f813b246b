#include "mz/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace mz {

uint64_t EvalConfig::hash() const {
  const std::string text = label() + "/" + std::to_string(gumbel_seeds) + "/" +
                           std::to_string(temperature) + "/" + std::to_string(plan.simulations) +
                           "/" + std::to_string(plan.initial_candidates) + "/" +
                           std::to_string(seed);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Action intuition_move(const Model& model, const GameState& state, double temperature, Rng& rng) {
  const NetworkOutput out = model.initial_inference(observe(state));
  const std::vector<Action> legal = legal_actions(state);
  if (temperature <= 0.0) {
    Action best = legal.front();
    double best_logit = -std::numeric_limits<double>::infinity();
    for (const Action a : legal) {
      if (out.policy_logits[a.cell] > best_logit) {
        best_logit = out.policy_logits[a.cell];
        best = a;
      }
    }
    return best;
  }
  std::vector<double> weights(legal.size());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (const Action a : legal) max_logit = std::max(max_logit, out.policy_logits[a.cell]);
  for (size_t i = 0; i < legal.size(); ++i) {
    weights[i] = std::exp((out.policy_logits[legal[i].cell] - max_logit) / temperature);
  }
  return legal[rng.categorical(weights)];
}

Action planned_move(const Model& model, const GameState& state, const PlanConfig& plan_cfg,
                    bool gumbel_sample, Rng& rng) {
  PlanConfig cfg = plan_cfg;
  cfg.dirichlet_fraction = 0.0;  // audits enter the search without root noise
  cfg.gumbel_zero = !gumbel_sample;
  return plan(model, observe(state), legal_actions(state), cfg, rng).chosen_action;
}

oracle::BadDecisionCount audit_model(const Model& model, const oracle::DecisionGraph& graph,
                                     const EvalConfig& eval) {
  const std::vector<int32_t> nodes = graph.relevant_nodes();
  const int planning_passes = eval.gumbel_sample ? eval.gumbel_seeds : 1;

  const int num_nodes = static_cast<int>(nodes.size());
  const int worker_count = std::max(1, eval.threads);
  std::vector<oracle::BadDecisionCount> partial(worker_count);
  std::atomic<int> next{0};
  constexpr int kGrain = 64;

  auto worker = [&](int slot) {
    oracle::BadDecisionCount& counts = partial[slot];
    for (;;) {
      const int begin = next.fetch_add(kGrain);
      if (begin >= num_nodes) break;
      const int end = std::min(num_nodes, begin + kGrain);
      for (int i = begin; i < end; ++i) {
        const int32_t id = nodes[i];
        const auto& node = graph.node(id);
        const oracle::Player player =
            node.state.to_move == Cell::kX ? oracle::Player::kX : oracle::Player::kO;

        {
          Rng rng(derive_seed(eval.seed, /*stream=*/0x49, static_cast<uint64_t>(id)));
          const Action a = intuition_move(model, node.state, eval.temperature, rng);
          if (graph.q_value(id, a) < graph.best_q(id)) {
            counts.at(player, oracle::EvalMode::kIntuition, false) += 1.0;
            if (node.on_optimal_path) counts.at(player, oracle::EvalMode::kIntuition, true) += 1.0;
          }
        }
        for (int pass = 0; pass < planning_passes; ++pass) {
          Rng rng(derive_seed(eval.seed, /*stream=*/0x50, static_cast<uint64_t>(id),
                              static_cast<uint64_t>(pass)));
          const Action a = planned_move(model, node.state, eval.plan, eval.gumbel_sample, rng);
          const double weight = 1.0 / planning_passes;
          if (graph.q_value(id, a) < graph.best_q(id)) {
            counts.at(player, oracle::EvalMode::kPlanning, false) += weight;
            if (node.on_optimal_path) {
              counts.at(player, oracle::EvalMode::kPlanning, true) += weight;
            }
          }
        }
      }
    }
  };

  if (worker_count == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker, t);
    for (auto& t : pool) t.join();
  }
  oracle::BadDecisionCount total;
  for (const auto& p : partial) total += p;
  return total;
}

double entropy_at_empty_board(const Model& model) {
  const NetworkOutput out = model.initial_inference(observe(initial_state()));
  const auto policy = out.policy();
  return oracle::entropy(std::vector<double>(policy.begin(), policy.end()));
}

ValueTrajectory value_trajectory(const Model& model, const std::vector<Action>& actions,
                                 int t_start) {
  if (t_start < 0 || t_start > kMaxGameLength - 1) {
    throw std::invalid_argument("t_start must lie in [0, 8]");
  }
  // Replay the prefix; the sequence must be legal until the game ends.
  std::vector<Observation> observations;
  GameState state = initial_state();
  observations.push_back(observe(state));
  for (const Action a : actions) {
    if (is_terminal(state)) break;
    if (!is_legal(state, a)) {
      throw std::invalid_argument("illegal action in trajectory prefix: cell " +
                                  std::to_string(a.cell));
    }
    state = apply_action(state, a);
    observations.push_back(observe(state));
  }
  const int last_obs = static_cast<int>(observations.size()) - 1;

  ValueTrajectory out;
  out.t_start = t_start;
  const int horizon = 2 * kMaxGameLength;
  out.values.resize(horizon + 1);
  for (int tp = 0; tp < t_start; ++tp) {
    out.values[tp] = model.initial_inference(observations[std::min(tp, last_obs)]).value;
  }
  NetworkOutput current = model.initial_inference(observations[std::min(t_start, last_obs)]);
  out.values[t_start] = current.value;
  for (int tp = t_start + 1; tp <= horizon; ++tp) {
    const int u = tp - 1;  // action index consumed by this step
    Action a = actions.empty() ? Action{0}
                               : actions[std::min<size_t>(u, actions.size() - 1)];
    current = model.recurrent_inference(current.latent, a);
    out.values[tp] = current.value;
  }
  return out;
}

std::optional<double> exploring_value_error(const std::vector<Episode>& episodes,
                                            const oracle::DecisionGraph& graph) {
  double sum = 0.0;
  int count = 0;
  for (const Episode& episode : episodes) {
    GameState state = initial_state();
    for (const DecisionRecord& record : episode.records) {
      if (record.exploring) {
        const int32_t id = graph.index_of(state);
        sum += std::abs(record.v_initial - static_cast<double>(graph.node(id).value));
        ++count;
      }
      state = apply_action(state, record.action);
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

}  // namespace mz
