#include "mz/experience.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mz {

void validate_episode(const Episode& episode) {
  if (episode.records.empty()) throw std::invalid_argument("episode has no moves");
  if (episode.observations.size() != episode.records.size() + 1) {
    throw std::invalid_argument("episode observation count does not match its length");
  }
  GameState state = initial_state();
  for (size_t t = 0; t < episode.records.size(); ++t) {
    if (observe(state) != episode.observations[t]) {
      throw std::invalid_argument("episode observation mismatch at t=" + std::to_string(t));
    }
    state = apply_action(state, episode.records[t].action);
  }
  const auto result = terminal_result(state);
  if (!result) throw std::invalid_argument("episode does not end in a terminal state");
  if (result->reward_to_last_mover != episode.reward_to_last_mover) {
    throw std::invalid_argument("episode terminal reward disagrees with replaying its actions");
  }
  if (observe(state) != episode.observations.back()) {
    throw std::invalid_argument("episode terminal observation mismatch");
  }
}

void ReplayWindow::store(Episode episode) {
  validate_episode(episode);
  std::lock_guard<std::mutex> lock(store_mutex_);
  total_positions_ += episode.length();
  episodes_.push_back(std::move(episode));
  while (static_cast<int>(episodes_.size()) > capacity_) {
    total_positions_ -= episodes_.front().length();
    episodes_.pop_front();
  }
}

namespace {

constexpr uint32_t kEpisodeMagic = 0x4d5a4531;  // "MZE1"
constexpr uint32_t kEpisodeVersion = 1;

// Record payload field order (all little-endian):
//   u64 seed, i32 acting_epoch, i32 t_start_normal, i32 reward, i32 length,
//   then per move: i32 action cell, u8 exploring, f64 v_initial,
//   f64 v_improved, 9 x f64 p_normal.
// Observations are reconstructed by replay, not stored.
void append_episode(std::string& out, const Episode& e) {
  auto put = [&out](const void* p, size_t n) {
    out.append(reinterpret_cast<const char*>(p), n);
  };
  const uint64_t seed = e.seed;
  const int32_t epoch = e.acting_epoch, t_start = e.t_start_normal,
                reward = e.reward_to_last_mover, length = e.length();
  put(&seed, 8);
  put(&epoch, 4);
  put(&t_start, 4);
  put(&reward, 4);
  put(&length, 4);
  for (const auto& r : e.records) {
    const int32_t cell = r.action.cell;
    const uint8_t exploring = r.exploring ? 1 : 0;
    put(&cell, 4);
    put(&exploring, 1);
    put(&r.v_initial, 8);
    put(&r.v_improved, 8);
    put(r.p_normal.data(), 9 * 8);
  }
}

}  // namespace

void ReplayWindow::persist(const std::string& path, uint64_t config_hash) const {
  std::lock_guard<std::mutex> lock(store_mutex_);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write episode store: " + path);
  const uint32_t magic = kEpisodeMagic, version = kEpisodeVersion;
  const uint64_t count = episodes_.size();
  out.write(reinterpret_cast<const char*>(&magic), 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&config_hash), 8);
  out.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& e : episodes_) {
    std::string payload;
    append_episode(payload, e);
    const uint32_t size = static_cast<uint32_t>(payload.size());
    out.write(reinterpret_cast<const char*>(&size), 4);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  if (!out) throw std::runtime_error("episode store write failed: " + path);
}

void ReplayWindow::restore(const std::string& path, uint64_t expected_config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open episode store: " + path);
  auto fail = [&in, &path](const std::string& what) {
    const auto offset = static_cast<long long>(in.tellg());
    throw std::runtime_error("corrupt episode store " + path + " at offset " +
                             std::to_string(offset) + ": " + what);
  };

  uint32_t magic = 0, version = 0;
  uint64_t config_hash = 0, count = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&config_hash), 8);
  in.read(reinterpret_cast<char*>(&count), 8);
  if (!in || magic != kEpisodeMagic) fail("bad header");
  if (version != kEpisodeVersion) fail("unsupported version " + std::to_string(version));
  if (expected_config_hash != 0 && config_hash != expected_config_hash) {
    fail("config hash mismatch");
  }

  std::deque<Episode> loaded;
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t size = 0;
    in.read(reinterpret_cast<char*>(&size), 4);
    if (!in) fail("truncated record header");
    std::string payload(size, '\0');
    in.read(payload.data(), size);
    if (!in) fail("truncated record payload");

    size_t pos = 0;
    auto get = [&](void* p, size_t n) {
      if (pos + n > payload.size()) fail("record payload too short");
      std::memcpy(p, payload.data() + pos, n);
      pos += n;
    };
    Episode e;
    uint64_t seed = 0;
    int32_t epoch = 0, t_start = 0, reward = 0, length = 0;
    get(&seed, 8);
    get(&epoch, 4);
    get(&t_start, 4);
    get(&reward, 4);
    get(&length, 4);
    if (length < 1 || length > kMaxGameLength) fail("bad episode length");
    e.seed = seed;
    e.acting_epoch = epoch;
    e.t_start_normal = t_start;
    e.reward_to_last_mover = reward;
    GameState state = initial_state();
    for (int32_t t = 0; t < length; ++t) {
      DecisionRecord r;
      int32_t cell = 0;
      uint8_t exploring = 0;
      get(&cell, 4);
      get(&exploring, 1);
      get(&r.v_initial, 8);
      get(&r.v_improved, 8);
      get(r.p_normal.data(), 9 * 8);
      r.t = t;
      r.exploring = exploring != 0;
      r.action = Action{cell};
      e.observations.push_back(observe(state));
      state = apply_action(state, r.action);
      e.records.push_back(r);
    }
    e.observations.push_back(observe(state));
    validate_episode(e);
    loaded.push_back(std::move(e));
  }

  std::lock_guard<std::mutex> lock(store_mutex_);
  episodes_ = std::move(loaded);
  total_positions_ = 0;
  for (const auto& e : episodes_) total_positions_ += e.length();
  while (static_cast<int>(episodes_.size()) > capacity_) {
    total_positions_ -= episodes_.front().length();
    episodes_.pop_front();
  }
}

void fill_sample(const Episode& episode, int t, const SymmetryTransform& transform,
                 const SampleOptions& options, TrainingBatch& batch, int row,
                 const std::vector<int>& filler_actions) {
  const int K = options.unroll_steps;
  const int steps = K + 1;
  const int length = episode.length();
  const std::vector<double> targets = assign_value_targets(
      episode.records, episode.reward_to_last_mover, episode.t_start_normal, options.target_mode);

  const Observation obs0 = apply_symmetry(episode.observations[t], transform);
  std::copy(obs0.planes.begin(), obs0.planes.end(),
            batch.obs.begin() + static_cast<size_t>(row) * 27);

  for (int tau = 0; tau < K; ++tau) {
    const int u = t + tau;
    const Action a =
        u < length ? episode.records[u].action : Action{filler_actions[u - length]};
    batch.actions[static_cast<size_t>(row) * K + tau] = apply_symmetry(a, transform).cell;
  }

  for (int tau = 0; tau <= K; ++tau) {
    const int u = t + tau;
    const size_t ti = static_cast<size_t>(row) * steps + tau;
    // Absorbing region: the terminal position's value is frozen, and in the
    // mover-relative sign convention the nominal alternation continues.
    const double absorbing_sign = u > length && (u - length) % 2 == 1 ? -1.0 : 1.0;
    batch.value_target[ti] = absorbing_sign * targets[std::min(u, length)];
    if (u < length) {
      batch.policy_mask[ti] = 1.0;
      const PolicyVector target = apply_symmetry(episode.records[u].p_normal, transform);
      std::copy(target.begin(), target.end(), batch.policy_target.begin() + ti * 9);
    }
    if (tau > 0 && u <= length) {
      batch.sim_mask[ti] = 1.0;
      const Observation target_obs = apply_symmetry(episode.observations[u], transform);
      std::copy(target_obs.planes.begin(), target_obs.planes.end(),
                batch.target_obs.begin() + ti * 27);
    }
  }
}

TrainingBatch sample_batch(const ReplayWindow& window, const SampleOptions& options, Rng& rng) {
  if (window.size() == 0) throw std::logic_error("cannot sample from an empty replay window");
  const int augment = options.symmetry_augment ? kNumSymmetries : 1;
  TrainingBatch batch;
  batch.resize(options.batch_size * augment, options.unroll_steps);

  for (int b = 0; b < options.batch_size; ++b) {
    // Uniform over (game, time) pairs via a global position index.
    int position = static_cast<int>(rng.index(window.total_positions()));
    int game = 0;
    while (position >= window.episode(game).length()) {
      position -= window.episode(game).length();
      ++game;
    }
    std::vector<int> fillers(options.unroll_steps);
    for (auto& f : fillers) f = rng.uniform_int(0, kNumCells - 1);
    for (int s = 0; s < augment; ++s) {
      fill_sample(window.episode(game), position, symmetries()[s], options, batch,
                  b * augment + s, fillers);
    }
  }
  return batch;
}

}  // namespace mz
