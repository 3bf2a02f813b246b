#include "mz/planner.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace mz {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct TreeNode {
  LatentState latent;
  std::array<double, kNumCells> logits{};
  double value = 0.0;
  int visits = 0;
  double value_sum = 0.0;
  std::array<std::unique_ptr<TreeNode>, kNumCells> children{};

  double mean_value() const { return visits > 0 ? value_sum / visits : value; }
};

SearchNode view_of(const TreeNode& node, const std::array<double, kNumCells>& prior_logits,
                   const std::array<bool, kNumCells>& valid) {
  SearchNode view;
  view.prior_logits = prior_logits;
  view.valid = valid;
  view.value = node.value;
  for (int a = 0; a < kNumCells; ++a) {
    const TreeNode* child = node.children[a].get();
    if (child && child->visits > 0) {
      view.visit_count[a] = child->visits;
      view.q_estimate[a] = -child->mean_value();
    }
  }
  return view;
}

SearchNode view_of(const TreeNode& node) {
  std::array<bool, kNumCells> all{};
  all.fill(true);
  return view_of(node, node.logits, all);
}

}  // namespace

void PlanConfig::validate() const {
  if (simulations < 1) throw std::invalid_argument("PlanConfig.simulations must be >= 1");
  if (initial_candidates < 2) {
    throw std::invalid_argument("PlanConfig.initial_candidates must be >= 2");
  }
  if (simulations < initial_candidates) {
    throw std::invalid_argument("PlanConfig.simulations must be >= initial_candidates");
  }
  if (dirichlet_fraction < 0.0 || dirichlet_fraction > 1.0) {
    throw std::invalid_argument("PlanConfig.dirichlet_fraction must be in [0, 1]");
  }
  if (prior_temperature <= 0.0) {
    throw std::invalid_argument("PlanConfig.prior_temperature must be > 0");
  }
}

double sigma(double q, int max_visit, const PlanConfig& cfg) {
  return (cfg.c_visit + max_visit) * cfg.c_scale * q;
}

double v_mix(const SearchNode& node) {
  int total_visits = 0;
  for (int a = 0; a < kNumCells; ++a) total_visits += node.visit_count[a];
  if (total_visits == 0) return node.value;

  std::array<double, kNumCells> priors{};
  {
    double max = kNegInf;
    for (int a = 0; a < kNumCells; ++a) {
      if (node.valid[a]) max = std::max(max, node.prior_logits[a]);
    }
    double sum = 0.0;
    for (int a = 0; a < kNumCells; ++a) {
      priors[a] = node.valid[a] ? std::exp(node.prior_logits[a] - max) : 0.0;
      sum += priors[a];
    }
    for (auto& p : priors) p /= sum;
  }
  double weight = 0.0, weighted_q = 0.0;
  for (int a = 0; a < kNumCells; ++a) {
    if (node.visit_count[a] > 0) {
      weight += priors[a];
      weighted_q += priors[a] * node.q_estimate[a];
    }
  }
  const double visited_q = weight > 0.0 ? weighted_q / weight : node.value;
  return (node.value + total_visits * visited_q) / (1.0 + total_visits);
}

std::array<double, kNumCells> completed_q(const SearchNode& node) {
  const double fill = v_mix(node);
  std::array<double, kNumCells> out{};
  for (int a = 0; a < kNumCells; ++a) {
    if (!node.valid[a]) continue;
    out[a] = node.visit_count[a] > 0 ? node.q_estimate[a] : fill;
  }
  return out;
}

std::array<double, kNumCells> improved_policy(const SearchNode& node, const PlanConfig& cfg,
                                              const MinMaxStats& stats, double temperature) {
  const auto completed = completed_q(node);
  int max_visit = 0;
  for (int a = 0; a < kNumCells; ++a) max_visit = std::max(max_visit, node.visit_count[a]);

  std::array<double, kNumCells> scores{};
  double max_score = kNegInf;
  for (int a = 0; a < kNumCells; ++a) {
    if (!node.valid[a]) {
      scores[a] = kNegInf;
      continue;
    }
    scores[a] =
        (node.prior_logits[a] + sigma(stats.normalize(completed[a]), max_visit, cfg)) /
        temperature;
    max_score = std::max(max_score, scores[a]);
  }
  std::array<double, kNumCells> policy{};
  double sum = 0.0;
  for (int a = 0; a < kNumCells; ++a) {
    if (node.valid[a]) {
      policy[a] = std::exp(scores[a] - max_score);
      sum += policy[a];
    }
  }
  for (auto& p : policy) p /= sum;
  return policy;
}

int non_root_select(const SearchNode& node, const PlanConfig& cfg, const MinMaxStats& stats) {
  const auto policy = improved_policy(node, cfg, stats, /*temperature=*/1.0);
  int total_visits = 0;
  for (int a = 0; a < kNumCells; ++a) total_visits += node.visit_count[a];
  int best = -1;
  double best_score = kNegInf;
  for (int a = 0; a < kNumCells; ++a) {
    if (!node.valid[a]) continue;
    const double score =
        policy[a] - static_cast<double>(node.visit_count[a]) / (1.0 + total_visits);
    if (score > best_score) {
      best_score = score;
      best = a;
    }
  }
  return best;
}

PolicyVector mix_dirichlet(const PolicyVector& priors, const std::vector<Action>& legal,
                           double alpha, double fraction, Rng& rng) {
  PolicyVector out{};
  if (fraction <= 0.0) return priors;
  const std::vector<double> noise = rng.dirichlet(alpha, legal.size());
  double sum = 0.0;
  for (size_t i = 0; i < legal.size(); ++i) {
    const int a = legal[i].cell;
    out[a] = (1.0 - fraction) * priors[a] + fraction * noise[i];
    sum += out[a];
  }
  for (auto& p : out) p /= sum;
  return out;
}

PlanResult plan(const InferenceEngine& engine, const Observation& root_obs,
                const std::vector<Action>& legal, const PlanConfig& cfg, Rng& rng) {
  cfg.validate();
  if (legal.empty()) throw std::invalid_argument("plan: no legal actions");

  std::array<bool, kNumCells> legal_mask{};
  for (const Action a : legal) legal_mask[a.cell] = true;

  const NetworkOutput root_out = engine.initial_inference(root_obs);
  TreeNode root;
  root.latent = root_out.latent;
  root.logits = root_out.policy_logits;
  root.value = root_out.value;

  // Root search priors: mask, then optionally mix in Dirichlet noise. The
  // noised priors are used everywhere inside this plan call.
  std::array<double, kNumCells> search_logits{};
  {
    std::array<double, kNumCells> masked = root_out.policy_logits;
    for (int a = 0; a < kNumCells; ++a) {
      if (!legal_mask[a]) masked[a] = kNegInf;
    }
    PolicyVector priors{};
    double max = kNegInf;
    for (int a = 0; a < kNumCells; ++a) max = std::max(max, masked[a]);
    double sum = 0.0;
    for (int a = 0; a < kNumCells; ++a) {
      priors[a] = legal_mask[a] ? std::exp(masked[a] - max) : 0.0;
      sum += priors[a];
    }
    for (auto& p : priors) p /= sum;
    if (cfg.dirichlet_fraction > 0.0) {
      priors = mix_dirichlet(priors, legal, cfg.dirichlet_alpha, cfg.dirichlet_fraction, rng);
    }
    for (int a = 0; a < kNumCells; ++a) {
      search_logits[a] = legal_mask[a] ? std::log(std::max(priors[a], 1e-300)) : kNegInf;
    }
  }

  // Gumbel draw (or zeros in eager mode), one value per action.
  std::array<double, kNumCells> gumbel{};
  if (!cfg.gumbel_zero) {
    for (int a = 0; a < kNumCells; ++a) gumbel[a] = rng.gumbel();
  }

  MinMaxStats stats;
  int recurrent_calls = 0;

  // One simulation: walk from the given root child downward through expanded
  // nodes, expand exactly one new node, and back the value up the path.
  auto simulate = [&](int root_action) {
    std::vector<TreeNode*> path{&root};
    int action = root_action;
    TreeNode* node = &root;
    while (node->children[action]) {
      node = node->children[action].get();
      path.push_back(node);
      action = non_root_select(view_of(*node), cfg, stats);
    }
    const NetworkOutput out = engine.recurrent_inference(node->latent, Action{action});
    ++recurrent_calls;
    auto child = std::make_unique<TreeNode>();
    child->latent = out.latent;
    child->logits = out.policy_logits;
    child->value = out.value;
    TreeNode* leaf = child.get();
    node->children[action] = std::move(child);
    path.push_back(leaf);

    double value = leaf->value;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      (*it)->visits += 1;
      (*it)->value_sum += value;
      value = -value;
    }
    for (size_t i = 0; i + 1 < path.size(); ++i) {
      stats.update(-path[i + 1]->mean_value());
    }
  };

  const auto root_view = [&]() { return view_of(root, search_logits, legal_mask); };

  // Ranking score used for sequential halving and the final choice:
  // g(a) + (logits(a) + sigma(q(a))) / T.
  auto scores_now = [&]() {
    const SearchNode view = root_view();
    const auto completed = completed_q(view);
    int max_visit = 0;
    for (int a = 0; a < kNumCells; ++a) max_visit = std::max(max_visit, view.visit_count[a]);
    std::array<double, kNumCells> score{};
    for (int a = 0; a < kNumCells; ++a) {
      score[a] = legal_mask[a]
                     ? gumbel[a] + (search_logits[a] +
                                    sigma(stats.normalize(completed[a]), max_visit, cfg)) /
                                       cfg.prior_temperature
                     : kNegInf;
    }
    return score;
  };

  // Initial candidates: top-m of g + logits, i.e. sampling without
  // replacement from the search prior.
  std::vector<int> candidates;
  {
    std::vector<int> order;
    for (const Action a : legal) order.push_back(a.cell);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return gumbel[a] + search_logits[a] > gumbel[b] + search_logits[b];
    });
    const int k = std::min<int>(cfg.initial_candidates, static_cast<int>(order.size()));
    candidates.assign(order.begin(), order.begin() + k);
  }

  // Sequential halving: the candidate set halves each phase, the simulation
  // budget is split equally across phases and across the survivors within a
  // phase; leftovers (and rounding debt) roll into the final phase.
  {
    std::vector<int> phase_sizes;
    for (int c = static_cast<int>(candidates.size()); c > 1; c = (c + 1) / 2) {
      phase_sizes.push_back(c);
    }
    if (phase_sizes.empty()) phase_sizes.push_back(1);  // single legal action
    const int num_phases = static_cast<int>(phase_sizes.size());
    const int base_budget = cfg.simulations / num_phases;
    int used_total = 0;
    int carry = 0;

    for (int j = 0; j < num_phases; ++j) {
      int budget = base_budget + carry;
      if (j == num_phases - 1) budget += cfg.simulations - base_budget * num_phases;
      const int c = static_cast<int>(candidates.size());
      const int per_candidate = std::max(1, c > 0 ? budget / c : 0);
      int used_phase = 0;
      for (int round = 0; round < per_candidate && used_total < cfg.simulations; ++round) {
        for (const int a : candidates) {
          if (used_total >= cfg.simulations) break;
          simulate(a);
          ++used_total;
          ++used_phase;
        }
      }
      carry = budget - used_phase;
      const auto score = scores_now();
      std::stable_sort(candidates.begin(), candidates.end(),
                       [&](int a, int b) { return score[a] > score[b]; });
      const int keep = std::max(1, (static_cast<int>(phase_sizes[j]) + 1) / 2);
      if (static_cast<int>(candidates.size()) > keep) candidates.resize(keep);
    }
    // Unspent budget (only possible with a single candidate left) deepens the
    // survivor's subtree; the recurrent-inference budget is exactly honored.
    while (used_total < cfg.simulations) {
      simulate(candidates.front());
      ++used_total;
    }
  }

  PlanResult result;
  result.chosen_action = Action{candidates.front()};
  result.root_value = root.value;
  const SearchNode view = root_view();
  result.improved_value = v_mix(view);
  result.completed_q = completed_q(view);
  result.visit_counts = view.visit_count;
  result.improved_policy = improved_policy(view, cfg, stats, cfg.prior_temperature);
  result.q_lo = stats.lo;
  result.q_hi = stats.hi;
  result.recurrent_calls = recurrent_calls;
  return result;
}

}  // namespace mz
