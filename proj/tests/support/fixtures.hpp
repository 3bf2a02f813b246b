#pragma once

// Shared test fixtures: solver-derived reference games and a tabular
// perfect-oracle inference stub to drive the planner without a network.

#include <array>
#include <cmath>
#include <vector>

#include "mz/game.hpp"
#include "mz/model.hpp"
#include "naive_minimax.hpp"

namespace mz::testing {

// Deterministic optimal game: both sides take the lowest-index minimax-optimal
// action. Plays to a 9-move draw.
inline std::vector<Action> optimal_game() {
  MinimaxTable table;
  std::vector<Action> actions;
  GameState state = initial_state();
  while (!is_terminal(state)) {
    Action best{-1};
    int best_q = -2;
    for (const Action a : legal_actions(state)) {
      const GameState next = apply_action(state, a);
      const int q = -table.value(next.board, next.to_move);
      if (q > best_q) {
        best_q = q;
        best = a;
      }
    }
    actions.push_back(best);
    state = apply_action(state, best);
  }
  return actions;
}

// A game with two deliberate blunders: o plays its worst reply on move 1, x
// plays a strictly suboptimal move at its first later opportunity; all other
// moves are optimal. Mirrors a game where both sides leave the optimal path.
inline std::vector<Action> two_blunder_game() {
  MinimaxTable table;
  std::vector<Action> actions;
  GameState state = initial_state();
  bool x_blundered = false;
  int t = 0;
  while (!is_terminal(state)) {
    int best_q = -2, worst_q = 2;
    Action best{-1}, worst{-1};
    for (const Action a : legal_actions(state)) {
      const GameState next = apply_action(state, a);
      const int q = -table.value(next.board, next.to_move);
      if (q > best_q) {
        best_q = q;
        best = a;
      }
      if (q < worst_q) {
        worst_q = q;
        worst = a;
      }
    }
    const bool want_blunder = t == 1 || (!x_blundered && t >= 2 && state.to_move == Cell::kX);
    Action pick = best;
    if (want_blunder && worst_q < best_q) {
      pick = worst;
      if (t >= 2 && state.to_move == Cell::kX) x_blundered = true;
    }
    actions.push_back(pick);
    state = apply_action(state, pick);
    ++t;
  }
  return actions;
}

// Perfect tabular model: exact minimax values everywhere, uniform priors at
// the root (initial inference), near-one-hot optimal priors in-mind. Illegal
// in-mind actions behave as a pass; terminal states absorb.
class OracleEngine : public InferenceEngine {
 public:
  NetworkOutput initial_inference(const Observation& obs) const override {
    const GameState state = decode_observation(obs);
    NetworkOutput out;
    out.policy_logits.fill(0.0);  // uniform root prior
    out.value = table_.value(state.board, state.to_move);
    out.latent = encode(state);
    return out;
  }

  NetworkOutput recurrent_inference(const LatentState& latent, Action a) const override {
    GameState state = decode_latent(latent);
    NetworkOutput out;
    const Cell other = opponent(state.to_move);
    const bool terminal = naive_line(state.board, state.to_move) ||
                          naive_line(state.board, other) || state.move_count == kNumCells;
    if (terminal) {
      // Absorbing: the position freezes but the nominal mover keeps
      // alternating, so the mover-relative value flips sign each step.
      state.to_move = other;
      out.value = table_.value(state.board, state.to_move);
      out.policy_logits.fill(0.0);
      out.latent = encode(state);
      out.latent.in_mind_time = latent.in_mind_time + 1;
      return out;
    }
    if (state.board[a.cell] == Cell::kEmpty) {
      state.board[a.cell] = state.to_move;
      state.move_count += 1;
    }
    // occupied cell: treated as a pass, only the mover flips
    state.to_move = other;
    out.value = table_.value(state.board, state.to_move);
    out.latent = encode(state);
    out.latent.in_mind_time = latent.in_mind_time + 1;

    // Near-one-hot prior on the optimal continuations.
    out.policy_logits.fill(0.0);
    const bool child_terminal = naive_line(state.board, Cell::kX) ||
                                naive_line(state.board, Cell::kO) ||
                                state.move_count == kNumCells;
    if (!child_terminal) {
      for (int cell = 0; cell < kNumCells; ++cell) {
        if (state.board[cell] != Cell::kEmpty) continue;
        std::array<Cell, kNumCells> next = state.board;
        next[cell] = state.to_move;
        const int q = -table_.value(next, opponent(state.to_move));
        if (q == table_.value(state.board, state.to_move)) out.policy_logits[cell] = 50.0;
      }
    }
    return out;
  }

 private:
  static LatentState encode(const GameState& state) {
    LatentState latent;
    latent.h.resize(2);
    latent.h[0] = static_cast<double>(state.key());
    latent.h[1] = state.to_move == Cell::kX ? 1.0 : 0.0;
    return latent;
  }

  static GameState decode_latent(const LatentState& latent) {
    GameState state;
    auto key = static_cast<uint32_t>(latent.h[0]);
    int stones = 0;
    for (int i = 0; i < kNumCells; ++i) {
      state.board[i] = static_cast<Cell>(key % 3);
      if (state.board[i] != Cell::kEmpty) ++stones;
      key /= 3;
    }
    state.to_move = latent.h[1] > 0.5 ? Cell::kX : Cell::kO;
    state.move_count = stones;
    return state;
  }

  static GameState decode_observation(const Observation& obs) {
    GameState state;
    const bool x_to_move = obs.planes[2 * kNumCells] > 0.5;
    const Cell mover = x_to_move ? Cell::kX : Cell::kO;
    const Cell other = opponent(mover);
    int stones = 0;
    for (int cell = 0; cell < kNumCells; ++cell) {
      if (obs.planes[cell] > 0.5) {
        state.board[cell] = mover;
        ++stones;
      } else if (obs.planes[kNumCells + cell] > 0.5) {
        state.board[cell] = other;
        ++stones;
      }
    }
    state.to_move = mover;
    state.move_count = stones;
    return state;
  }

  mutable MinimaxTable table_;
};

// Counts recurrent-inference calls, for the budget invariant.
class CountingEngine : public InferenceEngine {
 public:
  explicit CountingEngine(const InferenceEngine& inner) : inner_(inner) {}

  NetworkOutput initial_inference(const Observation& obs) const override {
    ++initial_calls;
    return inner_.initial_inference(obs);
  }
  NetworkOutput recurrent_inference(const LatentState& latent, Action a) const override {
    ++recurrent_calls;
    return inner_.recurrent_inference(latent, a);
  }

  mutable int initial_calls = 0;
  mutable int recurrent_calls = 0;

 private:
  const InferenceEngine& inner_;
};

}  // namespace mz::testing
