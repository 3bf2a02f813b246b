#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mz/game.hpp"

namespace mz::oracle {

// Exhaustive game-theoretic ground truth: the deduplicated graph of every
// reachable position, solved by retrograde minimax and classified into the
// nodes where a decision can be objectively bad.

struct GraphNode {
  GameState state;
  bool terminal = false;
  int8_t value = 0;                 // minimax value from the player to move, in {-1, 0, +1}
  bool relevant = false;            // >= 2 legal actions whose child values differ
  bool on_optimal_path = false;     // reachable with both players playing minimax-optimally
  std::array<int32_t, kNumCells> child{};  // node index per action, -1 if illegal
};

class DecisionGraph {
 public:
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const GraphNode& node(int32_t id) const { return nodes_[id]; }
  int32_t root() const { return 0; }
  int32_t size() const { return static_cast<int32_t>(nodes_.size()); }

  int32_t index_of(const GameState& state) const { return index_[state.key()]; }
  bool contains(const GameState& state) const { return index_[state.key()] >= 0; }

  // Q of taking `a` in node `id`, from the mover's perspective.
  int q_value(int32_t id, Action a) const { return -nodes_[nodes_[id].child[a.cell]].value; }
  int best_q(int32_t id) const;
  bool is_optimal(int32_t id, Action a) const { return q_value(id, a) == best_q(id); }

  std::vector<int32_t> relevant_nodes() const;

  friend DecisionGraph build_graph();
  friend bool load_graph(const std::string& path, DecisionGraph& graph);

  void save(const std::string& path) const;

 private:
  std::vector<GraphNode> nodes_;
  std::vector<int32_t> index_ = std::vector<int32_t>(19683, -1);  // 3^9 packed keys
};

// Exhaustive enumeration from the empty board with exact-state dedup
// (symmetry is deliberately not used for dedup), followed by retrograde
// minimax and decision-node classification.
DecisionGraph build_graph();

// Cached solved-graph file. Returns false if missing or of a stale version.
bool load_graph(const std::string& path, DecisionGraph& graph);
DecisionGraph load_or_build_graph(const std::string& cache_path);

enum class Player { kX = 0, kO = 1 };
enum class EvalMode { kIntuition = 0, kPlanning = 1 };  // raw policy argmax vs. tree search

// Counts keyed by (player, mode) over two scopes. Cells are fractional when a
// planning evaluation is averaged over several seeds.
struct BadDecisionCount {
  double all_nodes[2][2]{};      // [player][mode]
  double optimal_path[2][2]{};

  double& at(Player p, EvalMode m, bool optimal_scope) {
    return optimal_scope ? optimal_path[int(p)][int(m)] : all_nodes[int(p)][int(m)];
  }
  double at(Player p, EvalMode m, bool optimal_scope) const {
    return optimal_scope ? optimal_path[int(p)][int(m)] : all_nodes[int(p)][int(m)];
  }

  // Headline scalar: the sum over the four all-node cells. Testing once
  // without and once with tree search double-counts by design.
  double headline() const {
    return all_nodes[0][0] + all_nodes[0][1] + all_nodes[1][0] + all_nodes[1][1];
  }

  BadDecisionCount& operator+=(const BadDecisionCount& o);
  BadDecisionCount& operator*=(double s);
};

// A decision rule to audit: given a relevant decision node, produce the move
// the agent would take in the given evaluation mode.
using DecisionFn = std::function<Action(const GameState&, EvalMode)>;

// Walks every relevant decision node once per (player, mode) and counts the
// decisions whose chosen action is strictly below the best child value.
BadDecisionCount count_bad_decisions(const DecisionGraph& graph, const DecisionFn& decide);

// Policy entropy -sum p ln p with 0 ln 0 = 0.
double entropy(const PolicyVector& policy);
double entropy(const std::vector<double>& policy);

}  // namespace mz::oracle
