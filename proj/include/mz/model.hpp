#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "mz/batch.hpp"
#include "mz/game.hpp"
#include "mz/net.hpp"
#include "mz/rng.hpp"

namespace mz {

// Latent-dynamics model: representation, generation (dynamics), prediction
// heads, and the similarity projector/predictor pair used by the
// self-supervised consistency loss.

struct NetworkConfig {
  int residual_blocks = 6;
  int channels = 256;
  int bottleneck_channels = 128;
  int projector_hidden = 500;
  int projector_out = 500;
  int predictor_hidden = 250;
  int predictor_out = 500;
  int unroll_steps = 5;
  double policy_loss_weight = 1.0;      // c1
  double value_loss_weight = 1.0;       // c2
  double similarity_loss_weight = 2.0;  // c3
  double weight_decay = 1e-4;           // c4, coupled into the Adam step
  double learning_rate = 1e-4;
  double dynamics_grad_scale = 0.5;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;

  std::string to_json() const;
  static NetworkConfig from_json(const std::string& text);
};

// In-mind state s with its origin time t and in-mind time tau.
struct LatentState {
  net::Vec h;
  int origin_time = 0;
  int in_mind_time = 0;
};

struct NetworkOutput {
  std::array<double, kNumCells> policy_logits{};
  double value = 0.0;
  LatentState latent;

  std::array<double, kNumCells> policy() const {
    std::array<double, kNumCells> p{};
    net::softmax(policy_logits.data(), p.data(), kNumCells);
    return p;
  }
};

struct SimilarityVectors {
  net::Vec projection;  // P1
  net::Vec prediction;  // P2 = predictor(P1)
};

struct LossBreakdown {
  double total = 0.0;
  double policy = 0.0;      // c1-weighted
  double value = 0.0;       // c2-weighted
  double similarity = 0.0;  // c3-weighted
  double weight_decay = 0.0;
};

// The similarity loss convention: -cos(a, b), minimal at -1 for parallel
// vectors, 0 for orthogonal ones.
double negative_cosine(const net::Vec& a, const net::Vec& b);

// Abstract inference surface the planner runs against; lets tests drive the
// search with a tabular oracle in place of the trained network.
class InferenceEngine {
 public:
  virtual ~InferenceEngine() = default;
  virtual NetworkOutput initial_inference(const Observation& obs) const = 0;
  virtual NetworkOutput recurrent_inference(const LatentState& latent, Action a) const = 0;
};

// Frozen values for finite-difference gradient verification: the detached
// halves of the scaled-gradient mix and the stopped similarity targets are
// recorded once so the perturbed loss stays the function the analytic
// gradient differentiates.
struct GradCheckCache {
  bool recording = false;
  std::vector<net::Vec> detached_latents;   // per (sample, tau)
  std::vector<net::Vec> similarity_targets;  // per (sample, tau)
};

class Model : public InferenceEngine {
 public:
  Model(const NetworkConfig& config, uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  size_t parameter_count() const { return params_.size(); }
  const net::Vec& parameters() const { return params_.values(); }
  net::Vec& mutable_parameters() { return params_.values(); }
  const std::vector<net::ParamRegistry::Entry>& parameter_entries() const {
    return params_.entries();
  }

  int epoch_stamp() const { return epoch_stamp_; }
  void set_epoch_stamp(int epoch) { epoch_stamp_ = epoch; }

  // Provenance carried into every checkpoint: the hash of the producing run's
  // full configuration and its seed.
  void set_run_stamp(uint64_t config_hash, uint64_t seed) {
    run_config_hash_ = config_hash;
    run_seed_ = seed;
  }
  uint64_t run_config_hash() const { return run_config_hash_; }
  uint64_t run_seed() const { return run_seed_; }

  // Inference is read-only over the parameter snapshot and safe to call from
  // any number of threads. Training mutates parameters under exclusive access.
  NetworkOutput initial_inference(const Observation& obs) const override;
  NetworkOutput recurrent_inference(const LatentState& latent, Action a) const override;
  SimilarityVectors similarity_heads(const LatentState& latent) const;

  LossBreakdown compute_loss(const TrainingBatch& batch, GradCheckCache* cache = nullptr) const;
  // Analytic gradient of compute_loss (including the weight-decay term) into
  // `grad`, which must have parameter_count() entries. Deterministic for any
  // thread count: fixed-size chunks are reduced in index order.
  LossBreakdown loss_gradient(const TrainingBatch& batch, net::Vec& grad, int threads = 1) const;

  // One Adam update at the configured learning rate; weight decay rides along
  // as part of the gradient. Throws on non-finite loss or gradients.
  LossBreakdown train_step(const TrainingBatch& batch, int threads = 1);

  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<Model> load_checkpoint(const std::string& path);
  // Throws naming the first mismatched field if `expected` disagrees with the
  // stored config.
  static std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                                const NetworkConfig& expected);

 private:
  struct Nets;

  net::Vec run_representation(const double* obs, struct Activations* acts) const;
  net::Vec run_dynamics(const net::Vec& latent, int action, struct Activations* acts) const;
  void run_prediction(const net::Vec& latent, double* logits, double* value,
                      struct Activations* acts) const;

  NetworkConfig config_;
  net::ParamRegistry params_;
  std::shared_ptr<const Nets> nets_;
  int epoch_stamp_ = 0;
  uint64_t run_config_hash_ = 0;
  uint64_t run_seed_ = 0;

  // Adam state
  net::Vec adam_m_, adam_v_;
  long adam_step_ = 0;

  friend struct ModelTestPeer;
};

// Enumerates epoch checkpoints ("epoch-000123.ckpt") in a directory, sorted
// by epoch index.
std::vector<std::pair<int, std::string>> list_checkpoints(const std::string& dir);
std::string checkpoint_name(int epoch);

}  // namespace mz
