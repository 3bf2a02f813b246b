#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mz {

// Tic-Tac-Toe environment. All operations are pure functions of their inputs
// and safe to call from any number of concurrent workers.

inline constexpr int kNumCells = 9;
inline constexpr int kMaxGameLength = 9;
inline constexpr int kNumSymmetries = 8;
inline constexpr int kObservationSize = 27;  // 3 planes of 3x3

enum class Cell : uint8_t { kEmpty = 0, kX = 1, kO = 2 };

struct Action {
  int cell = -1;  // row-major board cell in [0, 8]

  bool operator==(const Action&) const = default;
};

struct GameState {
  std::array<Cell, kNumCells> board{};
  Cell to_move = Cell::kX;
  int move_count = 0;

  bool operator==(const GameState&) const = default;

  // Base-3 packed board; to_move and move_count are derivable from the stones,
  // so this is a complete identity for reachable states.
  uint32_t key() const {
    uint32_t k = 0;
    for (int i = kNumCells - 1; i >= 0; --i) k = k * 3 + static_cast<uint32_t>(board[i]);
    return k;
  }
};

// Three binary planes: stones of the player to move, stones of the opponent,
// and a constant plane that is 1 iff x is to move.
struct Observation {
  std::array<double, kObservationSize> planes{};

  bool operator==(const Observation&) const = default;
};

struct TerminalResult {
  // +1 if the last mover completed a line, 0 for a draw. The last mover can
  // never lose on their own move, so -1 does not occur here.
  int reward_to_last_mover = 0;

  bool is_win() const { return reward_to_last_mover > 0; }
};

// One of the 8 square symmetries (4 rotations x optional reflection).
struct SymmetryTransform {
  int id = 0;
  std::array<int, kNumCells> map{};  // cell i of the input lands on map[i]
};

using PolicyVector = std::array<double, kNumCells>;

GameState initial_state();
Cell opponent(Cell player);

bool is_terminal(const GameState& state);
std::optional<TerminalResult> terminal_result(const GameState& state);

// Exactly the empty cells; throws std::logic_error on a terminal state.
std::vector<Action> legal_actions(const GameState& state);
bool is_legal(const GameState& state, Action a);

// Throws std::invalid_argument naming the occupied cell on an illegal action.
GameState apply_action(const GameState& state, Action a);

Observation observe(const GameState& state);

// The symmetry group, indexed 0..7 with 0 = identity.
const std::array<SymmetryTransform, kNumSymmetries>& symmetries();
SymmetryTransform compose(const SymmetryTransform& first, const SymmetryTransform& second);
SymmetryTransform inverse(const SymmetryTransform& t);

Observation apply_symmetry(const Observation& obs, const SymmetryTransform& t);
PolicyVector apply_symmetry(const PolicyVector& policy, const SymmetryTransform& t);
Action apply_symmetry(Action a, const SymmetryTransform& t);
GameState apply_symmetry(const GameState& state, const SymmetryTransform& t);

std::string to_string(const GameState& state);

}  // namespace mz
