#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mz/decision.hpp"
#include "mz/model.hpp"
#include "mz/planner.hpp"

namespace mz {

// Hierarchical key/value configuration: dotted keys, one "key: value" pair
// per line, '#' comments. The canonical serialization (sorted keys) is hashed
// and stamped into every artifact a run produces.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  long get_long(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  std::string serialize() const;  // canonical: sorted keys, "key: value\n"
  uint64_t hash() const;          // FNV-1a of the canonical serialization

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// The full closed parameter set for one run: network, planning, decision,
// experience, training, evaluation schedule, and seed.
struct ExperimentConfig {
  NetworkConfig network;
  PlanConfig planning;

  bool exploration_on = true;
  double exploration_temperature = 5.0;
  ValueTargetMode target_mode = ValueTargetMode::kHybridInitial;

  int window_size = 10000;
  int games_per_epoch = 1000;
  int steps_per_epoch = 40;
  long training_steps = 50000;
  int batch_size = 256;
  bool symmetry_augment = true;

  bool eval_gumbel_sample = true;  // g ~ Gumbel during audited playouts
  int eval_gumbel_seeds = 3;       // averaged passes when sampling
  double eval_temperature = 0.0;   // intuition-mode selection, 0 = argmax
  int eval_stride = 1;             // audit every k-th checkpoint (final always)

  uint64_t seed = 0;
  int threads = 1;

  int epochs() const { return static_cast<int>(training_steps / steps_per_epoch); }

  // Named profiles: "paper" (the defaults above) and "desk", a scaled-down
  // profile with every algorithmic switch intact.
  static ExperimentConfig profile(const std::string& name);
  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  uint64_t hash() const { return to_kv().hash(); }

  void validate() const;
};

std::string target_mode_name(ValueTargetMode mode);
ValueTargetMode target_mode_from_name(const std::string& name);

}  // namespace mz
