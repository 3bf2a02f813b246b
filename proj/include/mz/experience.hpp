#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <vector>

#include "mz/batch.hpp"
#include "mz/decision.hpp"
#include "mz/game.hpp"
#include "mz/rng.hpp"

namespace mz {

// One finished self-play game: per-move decision records, the observation at
// every visited state (terminal included), and the episode stamps.
struct Episode {
  std::vector<DecisionRecord> records;
  std::vector<Observation> observations;  // length records.size() + 1
  int reward_to_last_mover = 0;
  int t_start_normal = 0;
  int acting_epoch = 0;
  uint64_t seed = 0;

  int length() const { return static_cast<int>(records.size()); }
};

// Replays the stored actions and checks the recorded terminal outcome.
// Throws on a non-terminal or inconsistent episode.
void validate_episode(const Episode& episode);

// Sliding window over the most recent games, FIFO eviction by completion
// order. Stores are serialized; sampling takes the window as-is (the
// orchestrator never samples during an in-flight store).
class ReplayWindow {
 public:
  explicit ReplayWindow(int capacity) : capacity_(capacity) {}

  void store(Episode episode);
  int size() const { return static_cast<int>(episodes_.size()); }
  int capacity() const { return capacity_; }
  int total_positions() const { return total_positions_; }
  const Episode& episode(int i) const { return episodes_[i]; }

  void persist(const std::string& path, uint64_t config_hash) const;
  // Throws with the byte offset on a corrupt or truncated file; the window is
  // left untouched in that case.
  void restore(const std::string& path, uint64_t expected_config_hash);

 private:
  int capacity_;
  int total_positions_ = 0;
  std::deque<Episode> episodes_;
  mutable std::mutex store_mutex_;
};

struct SampleOptions {
  int batch_size = 256;  // positions drawn before augmentation
  int unroll_steps = 5;
  bool symmetry_augment = true;  // expand each position by the 8 square symmetries
  ValueTargetMode target_mode = ValueTargetMode::kHybridInitial;
};

// Uniform over positions (a 9-move game is nine times as likely per position
// as a 1-move game), targets materialized from the episode's stored schedule,
// then symmetry-expanded.
TrainingBatch sample_batch(const ReplayWindow& window, const SampleOptions& options, Rng& rng);

// Unroll targets for one (episode, time) pair under one symmetry transform;
// sample_batch loops this over draws and transforms. Filler actions stand in
// for unroll steps past the terminal state; they are drawn once per position
// so that all eight images of a sample stay transforms of each other.
void fill_sample(const Episode& episode, int t, const SymmetryTransform& transform,
                 const SampleOptions& options, TrainingBatch& batch, int row,
                 const std::vector<int>& filler_actions);

}  // namespace mz
