#include "mz/game.hpp"

#include <stdexcept>

namespace mz {

namespace {

constexpr int kLines[8][3] = {
    {0, 1, 2}, {3, 4, 5}, {6, 7, 8},  // rows
    {0, 3, 6}, {1, 4, 7}, {2, 5, 8},  // columns
    {0, 4, 8}, {2, 4, 6},             // diagonals
};

bool has_line(const GameState& state, Cell player) {
  for (const auto& line : kLines) {
    if (state.board[line[0]] == player && state.board[line[1]] == player &&
        state.board[line[2]] == player) {
      return true;
    }
  }
  return false;
}

std::array<SymmetryTransform, kNumSymmetries> build_symmetries() {
  auto rotate90 = [](int cell) {
    const int r = cell / 3, c = cell % 3;
    return 3 * c + (2 - r);
  };
  auto mirror = [](int cell) {
    const int r = cell / 3, c = cell % 3;
    return 3 * r + (2 - c);
  };
  std::array<SymmetryTransform, kNumSymmetries> out{};
  for (int id = 0; id < kNumSymmetries; ++id) {
    out[id].id = id;
    const int rotations = id % 4;
    const bool reflected = id >= 4;
    for (int cell = 0; cell < kNumCells; ++cell) {
      int image = cell;
      for (int r = 0; r < rotations; ++r) image = rotate90(image);
      if (reflected) image = mirror(image);
      out[id].map[cell] = image;
    }
  }
  return out;
}

}  // namespace

GameState initial_state() { return GameState{}; }

Cell opponent(Cell player) { return player == Cell::kX ? Cell::kO : Cell::kX; }

bool is_terminal(const GameState& state) {
  return terminal_result(state).has_value();
}

std::optional<TerminalResult> terminal_result(const GameState& state) {
  const Cell last_mover = opponent(state.to_move);
  if (has_line(state, last_mover)) return TerminalResult{+1};
  if (state.move_count == kNumCells) return TerminalResult{0};
  return std::nullopt;
}

std::vector<Action> legal_actions(const GameState& state) {
  if (is_terminal(state)) throw std::logic_error("no legal actions: state is terminal");
  std::vector<Action> moves;
  moves.reserve(kNumCells - state.move_count);
  for (int cell = 0; cell < kNumCells; ++cell) {
    if (state.board[cell] == Cell::kEmpty) moves.push_back(Action{cell});
  }
  return moves;
}

bool is_legal(const GameState& state, Action a) {
  return a.cell >= 0 && a.cell < kNumCells && !is_terminal(state) &&
         state.board[a.cell] == Cell::kEmpty;
}

GameState apply_action(const GameState& state, Action a) {
  if (a.cell < 0 || a.cell >= kNumCells) {
    throw std::invalid_argument("action cell " + std::to_string(a.cell) + " out of range");
  }
  if (state.board[a.cell] != Cell::kEmpty) {
    throw std::invalid_argument("illegal action: cell " + std::to_string(a.cell) +
                                " is already occupied");
  }
  GameState next = state;
  next.board[a.cell] = state.to_move;
  next.to_move = opponent(state.to_move);
  next.move_count = state.move_count + 1;
  return next;
}

Observation observe(const GameState& state) {
  Observation obs{};
  const Cell mover = state.to_move;
  const Cell other = opponent(mover);
  for (int cell = 0; cell < kNumCells; ++cell) {
    if (state.board[cell] == mover) obs.planes[cell] = 1.0;
    if (state.board[cell] == other) obs.planes[kNumCells + cell] = 1.0;
    obs.planes[2 * kNumCells + cell] = (mover == Cell::kX) ? 1.0 : 0.0;
  }
  return obs;
}

const std::array<SymmetryTransform, kNumSymmetries>& symmetries() {
  static const auto table = build_symmetries();
  return table;
}

SymmetryTransform compose(const SymmetryTransform& first, const SymmetryTransform& second) {
  SymmetryTransform out{};
  out.id = -1;
  for (int cell = 0; cell < kNumCells; ++cell) out.map[cell] = second.map[first.map[cell]];
  for (const auto& t : symmetries()) {
    if (t.map == out.map) {
      out.id = t.id;
      break;
    }
  }
  return out;
}

SymmetryTransform inverse(const SymmetryTransform& t) {
  SymmetryTransform out{};
  out.id = -1;
  for (int cell = 0; cell < kNumCells; ++cell) out.map[t.map[cell]] = cell;
  for (const auto& s : symmetries()) {
    if (s.map == out.map) {
      out.id = s.id;
      break;
    }
  }
  return out;
}

Observation apply_symmetry(const Observation& obs, const SymmetryTransform& t) {
  Observation out{};
  for (int plane = 0; plane < 3; ++plane) {
    for (int cell = 0; cell < kNumCells; ++cell) {
      out.planes[plane * kNumCells + t.map[cell]] = obs.planes[plane * kNumCells + cell];
    }
  }
  return out;
}

PolicyVector apply_symmetry(const PolicyVector& policy, const SymmetryTransform& t) {
  PolicyVector out{};
  for (int cell = 0; cell < kNumCells; ++cell) out[t.map[cell]] = policy[cell];
  return out;
}

Action apply_symmetry(Action a, const SymmetryTransform& t) { return Action{t.map[a.cell]}; }

GameState apply_symmetry(const GameState& state, const SymmetryTransform& t) {
  GameState out = state;
  for (int cell = 0; cell < kNumCells; ++cell) out.board[t.map[cell]] = state.board[cell];
  return out;
}

std::string to_string(const GameState& state) {
  std::string s;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const Cell cell = state.board[3 * r + c];
      s += cell == Cell::kEmpty ? '.' : (cell == Cell::kX ? 'x' : 'o');
    }
    s += '\n';
  }
  return s;
}

}  // namespace mz
