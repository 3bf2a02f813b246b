#include "mz/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <stdexcept>

namespace mz::oracle {

namespace {

int8_t solve_node(std::vector<GraphNode>& nodes, int32_t id, std::vector<uint8_t>& solved) {
  GraphNode& node = nodes[id];
  if (solved[id]) return node.value;
  if (node.terminal) {
    // From the nominal mover's perspective: the opponent just completed a
    // line (-1) or the board filled up (0).
    node.value = terminal_result(node.state)->is_win() ? -1 : 0;
  } else {
    int8_t best = -2;
    for (int cell = 0; cell < kNumCells; ++cell) {
      if (node.child[cell] < 0) continue;
      const int8_t q = -solve_node(nodes, node.child[cell], solved);
      if (q > best) best = q;
    }
    node.value = best;
  }
  solved[id] = 1;
  return node.value;
}

constexpr uint32_t kGraphMagic = 0x4d5a4731;  // "MZG1"
constexpr uint32_t kGraphVersion = 1;

}  // namespace

int DecisionGraph::best_q(int32_t id) const { return nodes_[id].value; }

std::vector<int32_t> DecisionGraph::relevant_nodes() const {
  std::vector<int32_t> out;
  for (int32_t id = 0; id < size(); ++id) {
    if (nodes_[id].relevant) out.push_back(id);
  }
  return out;
}

DecisionGraph build_graph() {
  DecisionGraph graph;
  graph.nodes_.reserve(6000);

  std::deque<int32_t> frontier;
  auto intern = [&graph](const GameState& state) {
    int32_t& slot = graph.index_[state.key()];
    if (slot < 0) {
      slot = graph.size();
      GraphNode node;
      node.state = state;
      node.terminal = is_terminal(state);
      node.child.fill(-1);
      graph.nodes_.push_back(node);
      return std::pair<int32_t, bool>{slot, true};
    }
    return std::pair<int32_t, bool>{slot, false};
  };

  frontier.push_back(intern(initial_state()).first);
  while (!frontier.empty()) {
    const int32_t id = frontier.front();
    frontier.pop_front();
    if (graph.nodes_[id].terminal) continue;
    const GameState state = graph.nodes_[id].state;
    for (const Action a : legal_actions(state)) {
      auto [child_id, fresh] = intern(apply_action(state, a));
      graph.nodes_[id].child[a.cell] = child_id;
      if (fresh) frontier.push_back(child_id);
    }
  }

  std::vector<uint8_t> solved(graph.size(), 0);
  solve_node(graph.nodes_, graph.root(), solved);

  // Relevant decision nodes: a real choice exists and it matters.
  for (auto& node : graph.nodes_) {
    if (node.terminal) continue;
    int legal = 0;
    int8_t best = -2, worst = 2;
    for (int cell = 0; cell < kNumCells; ++cell) {
      if (node.child[cell] < 0) continue;
      ++legal;
      const int8_t q = -graph.nodes_[node.child[cell]].value;
      best = std::max(best, q);
      worst = std::min(worst, q);
    }
    node.relevant = legal >= 2 && best != worst;
  }

  // Optimal path: reachable from the root while both players only take
  // minimax-optimal actions.
  std::vector<uint8_t> seen(graph.size(), 0);
  std::deque<int32_t> optimal_frontier{graph.root()};
  seen[graph.root()] = 1;
  while (!optimal_frontier.empty()) {
    const int32_t id = optimal_frontier.front();
    optimal_frontier.pop_front();
    GraphNode& node = graph.nodes_[id];
    node.on_optimal_path = true;
    if (node.terminal) continue;
    for (int cell = 0; cell < kNumCells; ++cell) {
      const int32_t child = node.child[cell];
      if (child < 0 || seen[child]) continue;
      if (-graph.nodes_[child].value == node.value) {
        seen[child] = 1;
        optimal_frontier.push_back(child);
      }
    }
  }
  return graph;
}

void DecisionGraph::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open graph cache for writing: " + path);
  const uint32_t magic = kGraphMagic, version = kGraphVersion;
  const uint32_t count = static_cast<uint32_t>(nodes_.size());
  out.write(reinterpret_cast<const char*>(&magic), sizeof magic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& node : nodes_) {
    const uint32_t key = node.state.key();
    out.write(reinterpret_cast<const char*>(&key), sizeof key);
    const int8_t flags = static_cast<int8_t>((node.terminal ? 1 : 0) | (node.relevant ? 2 : 0) |
                                             (node.on_optimal_path ? 4 : 0));
    out.write(reinterpret_cast<const char*>(&flags), 1);
    out.write(reinterpret_cast<const char*>(&node.value), 1);
    out.write(reinterpret_cast<const char*>(node.child.data()), sizeof node.child);
  }
}

bool load_graph(const std::string& path, DecisionGraph& graph) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  uint32_t magic = 0, version = 0, count = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || magic != kGraphMagic || version != kGraphVersion) return false;

  graph.nodes_.assign(count, GraphNode{});
  graph.index_.assign(19683, -1);
  for (uint32_t id = 0; id < count; ++id) {
    GraphNode& node = graph.nodes_[id];
    uint32_t key = 0;
    int8_t flags = 0;
    in.read(reinterpret_cast<char*>(&key), sizeof key);
    in.read(reinterpret_cast<char*>(&flags), 1);
    in.read(reinterpret_cast<char*>(&node.value), 1);
    in.read(reinterpret_cast<char*>(node.child.data()), sizeof node.child);
    if (!in) return false;
    node.terminal = flags & 1;
    node.relevant = flags & 2;
    node.on_optimal_path = flags & 4;
    uint32_t k = key;
    int stones = 0;
    for (int cell = 0; cell < kNumCells; ++cell) {
      node.state.board[cell] = static_cast<Cell>(k % 3);
      if (node.state.board[cell] != Cell::kEmpty) ++stones;
      k /= 3;
    }
    int x_count = 0;
    for (const Cell c : node.state.board) x_count += (c == Cell::kX);
    node.state.to_move = (x_count * 2 == stones) ? Cell::kX : Cell::kO;
    node.state.move_count = stones;
    graph.index_[key] = static_cast<int32_t>(id);
  }
  return true;
}

DecisionGraph load_or_build_graph(const std::string& cache_path) {
  DecisionGraph graph;
  if (!cache_path.empty() && load_graph(cache_path, graph)) return graph;
  graph = build_graph();
  if (!cache_path.empty()) graph.save(cache_path);
  return graph;
}

BadDecisionCount& BadDecisionCount::operator+=(const BadDecisionCount& o) {
  for (int p = 0; p < 2; ++p) {
    for (int m = 0; m < 2; ++m) {
      all_nodes[p][m] += o.all_nodes[p][m];
      optimal_path[p][m] += o.optimal_path[p][m];
    }
  }
  return *this;
}

BadDecisionCount& BadDecisionCount::operator*=(double s) {
  for (int p = 0; p < 2; ++p) {
    for (int m = 0; m < 2; ++m) {
      all_nodes[p][m] *= s;
      optimal_path[p][m] *= s;
    }
  }
  return *this;
}

BadDecisionCount count_bad_decisions(const DecisionGraph& graph, const DecisionFn& decide) {
  BadDecisionCount counts;
  for (int32_t id = 0; id < graph.size(); ++id) {
    const GraphNode& node = graph.node(id);
    if (!node.relevant) continue;
    const Player player = node.state.to_move == Cell::kX ? Player::kX : Player::kO;
    for (const EvalMode mode : {EvalMode::kIntuition, EvalMode::kPlanning}) {
      const Action chosen = decide(node.state, mode);
      if (node.child[chosen.cell] < 0) {
        throw std::logic_error("audited agent returned an illegal action");
      }
      if (graph.q_value(id, chosen) < graph.best_q(id)) {
        counts.at(player, mode, false) += 1.0;
        if (node.on_optimal_path) counts.at(player, mode, true) += 1.0;
      }
    }
  }
  return counts;
}

double entropy(const PolicyVector& policy) {
  return entropy(std::vector<double>(policy.begin(), policy.end()));
}

double entropy(const std::vector<double>& policy) {
  double h = 0.0;
  for (const double p : policy) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace mz::oracle
