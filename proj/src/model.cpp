#include "mz/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace mz {

using net::Vec;

namespace {

constexpr int kChunkSize = 32;  // fixed grain so reductions are thread-count independent

struct Tower {
  net::Conv3x3 conv_in;
  std::vector<std::array<net::Conv3x3, 2>> blocks;

  Tower() = default;
  Tower(net::ParamRegistry& reg, const std::string& name, int in_c, int channels, int bottleneck,
        int num_blocks) {
    conv_in = net::Conv3x3(reg, name + ".in", in_c, channels);
    for (int b = 0; b < num_blocks; ++b) {
      const std::string prefix = name + ".block" + std::to_string(b);
      blocks.push_back({net::Conv3x3(reg, prefix + ".a", channels, bottleneck),
                        net::Conv3x3(reg, prefix + ".b", bottleneck, channels)});
    }
  }
};

struct TowerActs {
  Vec input;
  std::vector<Vec> h_in;  // block inputs
  std::vector<Vec> r1;    // first conv outputs, pre-activation
  Vec out;
};

struct MlpActs {
  Vec in;
  Vec hid_pre;
  Vec out;
};

struct PredActs {
  Vec latent_in;
  std::array<double, 9> logits{};
  Vec value_hidden_pre;
  double value_pre_tanh = 0.0;
  double value = 0.0;
};

// Pre-activation residual bottleneck: h += conv_b(relu(conv_a(relu(h)))).
Vec tower_forward(const double* params, const Tower& tower, const double* x, TowerActs* acts) {
  const int channels = tower.conv_in.out_channels();
  const int spatial = channels * 9;
  Vec h(spatial);
  tower.conv_in.forward(params, x, h.data());
  if (acts) {
    acts->input.assign(x, x + tower.conv_in.in_channels() * 9);
    acts->h_in.clear();
    acts->r1.clear();
  }
  Vec r0, r1, r2, r3;
  for (const auto& block : tower.blocks) {
    const int bneck = block[0].out_channels() * 9;
    r0.resize(spatial);
    r1.resize(bneck);
    r2.resize(bneck);
    r3.resize(spatial);
    if (acts) acts->h_in.push_back(h);
    net::relu(h.data(), r0.data(), spatial);
    block[0].forward(params, r0.data(), r1.data());
    if (acts) acts->r1.push_back(r1);
    net::relu(r1.data(), r2.data(), bneck);
    block[1].forward(params, r2.data(), r3.data());
    for (int i = 0; i < spatial; ++i) h[i] += r3[i];
  }
  if (acts) acts->out = h;
  return h;
}

void tower_backward(const double* params, const Tower& tower, const TowerActs& acts,
                    const Vec& gout, Vec* gin, double* grads) {
  const int channels = tower.conv_in.out_channels();
  const int spatial = channels * 9;
  Vec gh = gout;
  Vec r0, r2, gr0, gr1, gr2, gr3;
  for (int b = static_cast<int>(tower.blocks.size()) - 1; b >= 0; --b) {
    const auto& block = tower.blocks[b];
    const int bneck = block[0].out_channels() * 9;
    const Vec& h_in = acts.h_in[b];
    const Vec& r1 = acts.r1[b];
    r0.resize(spatial);
    r2.resize(bneck);
    net::relu(h_in.data(), r0.data(), spatial);
    net::relu(r1.data(), r2.data(), bneck);

    gr3 = gh;  // residual branch gradient
    gr2.resize(bneck);
    block[1].backward(params, r2.data(), gr3.data(), gr2.data(), grads);
    gr1.resize(bneck);
    net::relu_backward(r1.data(), gr2.data(), gr1.data(), bneck);
    gr0.resize(spatial);
    block[0].backward(params, r0.data(), gr1.data(), gr0.data(), grads);
    // gh flows through the skip connection plus the block path.
    for (int i = 0; i < spatial; ++i) {
      gh[i] += h_in[i] > 0.0 ? gr0[i] : 0.0;
    }
  }
  if (gin) gin->resize(tower.conv_in.in_channels() * 9);
  tower.conv_in.backward(params, acts.input.data(), gh.data(), gin ? gin->data() : nullptr,
                         grads);
}

// Norms are floored so the cosine stays defined when an early network emits a
// (near-)zero vector; the gradient below differentiates exactly this formula.
constexpr double kCosineNormFloor = 1e-4;

double cosine_similarity(const Vec& a, const Vec& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::max(std::sqrt(na), kCosineNormFloor);
  nb = std::max(std::sqrt(nb), kCosineNormFloor);
  return dot / (na * nb);
}

// d(-cos(a, b))/da with b treated as constant. Below the norm floor the
// denominator is constant, which keeps the derivative bounded.
void neg_cosine_grad(const Vec& a, const Vec& b, double coeff, Vec& ga) {
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na2 += a[i] * a[i];
    nb2 += b[i] * b[i];
  }
  const double na_raw = std::sqrt(na2);
  const double na = std::max(na_raw, kCosineNormFloor);
  const double nb = std::max(std::sqrt(nb2), kCosineNormFloor);
  const double inv = 1.0 / (na * nb);
  const double cos = dot * inv;
  ga.resize(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (na_raw >= kCosineNormFloor) {
      ga[i] = -coeff * (b[i] * inv - cos * a[i] / (na * na));
    } else {
      ga[i] = -coeff * b[i] * inv;
    }
  }
}

}  // namespace

double negative_cosine(const net::Vec& a, const net::Vec& b) { return -cosine_similarity(a, b); }

struct Model::Nets {
  Tower representation;
  Tower dynamics;
  net::Linear policy_head;
  net::Linear value_hidden;
  net::Linear value_out;
  net::Linear projector_hidden;
  net::Linear projector_out;
  net::Linear predictor_hidden;
  net::Linear predictor_out;
};

struct Activations {
  TowerActs tower;
  PredActs pred;
  MlpActs proj;
  MlpActs predr;
};

void NetworkConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("NetworkConfig.") + name + " must be positive");
  };
  positive(residual_blocks, "residual_blocks");
  positive(channels, "channels");
  positive(bottleneck_channels, "bottleneck_channels");
  positive(projector_hidden, "projector_hidden");
  positive(projector_out, "projector_out");
  positive(predictor_hidden, "predictor_hidden");
  positive(predictor_out, "predictor_out");
  if (unroll_steps < 0) throw std::invalid_argument("NetworkConfig.unroll_steps must be >= 0");
  if (predictor_out != projector_out) {
    throw std::invalid_argument(
        "NetworkConfig.predictor_out must match projector_out (cosine targets)");
  }
  if (dynamics_grad_scale <= 0.0 || dynamics_grad_scale > 1.0) {
    throw std::invalid_argument("NetworkConfig.dynamics_grad_scale must be in (0, 1]");
  }
}

std::string NetworkConfig::to_json() const {
  nlohmann::json j;
  j["residual_blocks"] = residual_blocks;
  j["channels"] = channels;
  j["bottleneck_channels"] = bottleneck_channels;
  j["projector_hidden"] = projector_hidden;
  j["projector_out"] = projector_out;
  j["predictor_hidden"] = predictor_hidden;
  j["predictor_out"] = predictor_out;
  j["unroll_steps"] = unroll_steps;
  j["policy_loss_weight"] = policy_loss_weight;
  j["value_loss_weight"] = value_loss_weight;
  j["similarity_loss_weight"] = similarity_loss_weight;
  j["weight_decay"] = weight_decay;
  j["learning_rate"] = learning_rate;
  j["dynamics_grad_scale"] = dynamics_grad_scale;
  return j.dump();
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  NetworkConfig c;
  c.residual_blocks = j.at("residual_blocks").get<int>();
  c.channels = j.at("channels").get<int>();
  c.bottleneck_channels = j.at("bottleneck_channels").get<int>();
  c.projector_hidden = j.at("projector_hidden").get<int>();
  c.projector_out = j.at("projector_out").get<int>();
  c.predictor_hidden = j.at("predictor_hidden").get<int>();
  c.predictor_out = j.at("predictor_out").get<int>();
  c.unroll_steps = j.at("unroll_steps").get<int>();
  c.policy_loss_weight = j.at("policy_loss_weight").get<double>();
  c.value_loss_weight = j.at("value_loss_weight").get<double>();
  c.similarity_loss_weight = j.at("similarity_loss_weight").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.dynamics_grad_scale = j.at("dynamics_grad_scale").get<double>();
  return c;
}

Model::Model(const NetworkConfig& config, uint64_t seed) : config_(config) {
  config_.validate();
  auto nets = std::make_shared<Nets>();
  const int c = config_.channels;
  const int flat = c * 9;
  nets->representation = Tower(params_, "representation", 3, c, config_.bottleneck_channels,
                               config_.residual_blocks);
  nets->dynamics =
      Tower(params_, "dynamics", c + 1, c, config_.bottleneck_channels, config_.residual_blocks);
  nets->policy_head = net::Linear(params_, "policy", flat, kNumCells);
  nets->value_hidden = net::Linear(params_, "value.hidden", flat, config_.bottleneck_channels);
  nets->value_out = net::Linear(params_, "value.out", config_.bottleneck_channels, 1);
  nets->projector_hidden = net::Linear(params_, "projector.hidden", flat, config_.projector_hidden);
  nets->projector_out =
      net::Linear(params_, "projector.out", config_.projector_hidden, config_.projector_out);
  nets->predictor_hidden =
      net::Linear(params_, "predictor.hidden", config_.projector_out, config_.predictor_hidden);
  nets->predictor_out =
      net::Linear(params_, "predictor.out", config_.predictor_hidden, config_.predictor_out);
  nets_ = nets;

  Rng rng(derive_seed(seed, /*stream=*/0x6d6f64656cULL));
  double* p = params_.data();
  nets_->representation.conv_in.init(p, rng);
  for (const auto& b : nets_->representation.blocks) {
    b[0].init(p, rng);
    b[1].init(p, rng);
  }
  nets_->dynamics.conv_in.init(p, rng);
  for (const auto& b : nets_->dynamics.blocks) {
    b[0].init(p, rng);
    b[1].init(p, rng);
  }
  nets_->policy_head.init(p, rng);
  nets_->value_hidden.init(p, rng);
  nets_->value_out.init(p, rng);
  nets_->projector_hidden.init(p, rng);
  nets_->projector_out.init(p, rng);
  nets_->predictor_hidden.init(p, rng);
  nets_->predictor_out.init(p, rng);

  adam_m_.assign(params_.size(), 0.0);
  adam_v_.assign(params_.size(), 0.0);
}

void Model::run_prediction(const Vec& latent, double* logits, double* value,
                           Activations* acts) const {
  const double* p = params_.data();
  nets_->policy_head.forward(p, latent.data(), logits);
  Vec vh(config_.bottleneck_channels);
  nets_->value_hidden.forward(p, latent.data(), vh.data());
  Vec vr(config_.bottleneck_channels);
  net::relu(vh.data(), vr.data(), vh.size());
  double v_pre = 0.0;
  nets_->value_out.forward(p, vr.data(), &v_pre);
  *value = std::tanh(v_pre);
  if (acts) {
    acts->pred.latent_in = latent;
    std::copy(logits, logits + kNumCells, acts->pred.logits.begin());
    acts->pred.value_hidden_pre = vh;
    acts->pred.value_pre_tanh = v_pre;
    acts->pred.value = *value;
  }
}

NetworkOutput Model::initial_inference(const Observation& obs) const {
  NetworkOutput out;
  out.latent.h = tower_forward(params_.data(), nets_->representation, obs.planes.data(), nullptr);
  out.latent.in_mind_time = 0;
  run_prediction(out.latent.h, out.policy_logits.data(), &out.value, nullptr);
  return out;
}

NetworkOutput Model::recurrent_inference(const LatentState& latent, Action a) const {
  if (latent.h.size() != static_cast<size_t>(config_.channels) * 9) {
    throw std::invalid_argument("latent state does not match the model configuration");
  }
  Vec input(static_cast<size_t>(config_.channels + 1) * 9, 0.0);
  std::copy(latent.h.begin(), latent.h.end(), input.begin());
  input[latent.h.size() + a.cell] = 1.0;  // action as a one-hot plane

  NetworkOutput out;
  out.latent.h = tower_forward(params_.data(), nets_->dynamics, input.data(), nullptr);
  out.latent.origin_time = latent.origin_time;
  out.latent.in_mind_time = latent.in_mind_time + 1;
  run_prediction(out.latent.h, out.policy_logits.data(), &out.value, nullptr);
  return out;
}

SimilarityVectors Model::similarity_heads(const LatentState& latent) const {
  const double* p = params_.data();
  SimilarityVectors out;
  Vec hid(config_.projector_hidden);
  nets_->projector_hidden.forward(p, latent.h.data(), hid.data());
  Vec hid_r(config_.projector_hidden);
  net::relu(hid.data(), hid_r.data(), hid.size());
  out.projection.resize(config_.projector_out);
  nets_->projector_out.forward(p, hid_r.data(), out.projection.data());

  Vec phid(config_.predictor_hidden);
  nets_->predictor_hidden.forward(p, out.projection.data(), phid.data());
  Vec phid_r(config_.predictor_hidden);
  net::relu(phid.data(), phid_r.data(), phid.size());
  out.prediction.resize(config_.predictor_out);
  nets_->predictor_out.forward(p, phid_r.data(), out.prediction.data());
  return out;
}

namespace {

struct SampleWork {
  // Per-sample forward state kept for the backward pass.
  TowerActs rep;
  std::vector<TowerActs> dyn;
  std::vector<PredActs> pred;
  std::vector<MlpActs> proj;
  std::vector<MlpActs> predr;
  std::vector<Vec> latents;
  std::vector<Vec> sim_targets;
};

}  // namespace

LossBreakdown Model::compute_loss(const TrainingBatch& batch, GradCheckCache* cache) const {
  LossBreakdown sums;
  const int K = batch.unroll;
  const int steps = K + 1;
  const double* p = params_.data();
  if (cache && cache->recording) {
    cache->detached_latents.assign(static_cast<size_t>(batch.size) * std::max(K, 1), Vec{});
    cache->similarity_targets.assign(static_cast<size_t>(batch.size) * steps, Vec{});
  }

  for (int i = 0; i < batch.size; ++i) {
    Vec latent =
        tower_forward(p, nets_->representation, batch.obs.data() + static_cast<size_t>(i) * 27,
                      nullptr);
    for (int tau = 0; tau <= K; ++tau) {
      const size_t ti = static_cast<size_t>(i) * steps + tau;
      const double step_weight = tau == 0 ? 1.0 : 1.0 / K;
      std::array<double, 9> logits{};
      double value = 0.0;
      run_prediction(latent, logits.data(), &value, nullptr);

      if (batch.policy_mask[ti] > 0.0) {
        std::array<double, 9> probs{};
        net::softmax(logits.data(), probs.data(), kNumCells);
        double ce = 0.0;
        for (int a = 0; a < kNumCells; ++a) {
          const double target = batch.policy_target[ti * 9 + a];
          if (target > 0.0) ce -= target * std::log(std::max(probs[a], 1e-300));
        }
        sums.policy += step_weight * config_.policy_loss_weight * ce;
      }
      const double dv = value - batch.value_target[ti];
      sums.value += step_weight * config_.value_loss_weight * dv * dv;

      if (tau > 0 && batch.sim_mask[ti] > 0.0) {
        SimilarityVectors online = similarity_heads(LatentState{latent, 0, tau});
        Vec target;
        if (cache && !cache->recording) {
          target = cache->similarity_targets[ti];
        } else {
          Vec target_latent = tower_forward(
              p, nets_->representation, batch.target_obs.data() + ti * 27, nullptr);
          target = similarity_heads(LatentState{target_latent, 0, 0}).projection;
          if (cache) cache->similarity_targets[ti] = target;
        }
        sums.similarity += step_weight * config_.similarity_loss_weight *
                           (-cosine_similarity(online.prediction, target));
      }

      if (tau < K) {
        const size_t li = static_cast<size_t>(i) * K + tau;
        Vec dyn_latent = latent;
        if (cache && !cache->recording) {
          // Mix with the frozen detached copy so finite differences see the
          // same function the scaled gradient differentiates.
          const Vec& frozen = cache->detached_latents[li];
          const double s = config_.dynamics_grad_scale;
          for (size_t j = 0; j < dyn_latent.size(); ++j) {
            dyn_latent[j] = s * dyn_latent[j] + (1.0 - s) * frozen[j];
          }
        } else if (cache) {
          cache->detached_latents[li] = latent;
        }
        Vec input(static_cast<size_t>(config_.channels + 1) * 9, 0.0);
        std::copy(dyn_latent.begin(), dyn_latent.end(), input.begin());
        input[dyn_latent.size() + batch.actions[static_cast<size_t>(i) * K + tau]] = 1.0;
        latent = tower_forward(p, nets_->dynamics, input.data(), nullptr);
      }
    }
  }

  const double inv = batch.size > 0 ? 1.0 / batch.size : 0.0;
  sums.policy *= inv;
  sums.value *= inv;
  sums.similarity *= inv;
  double norm2 = 0.0;
  for (const double w : params_.values()) norm2 += w * w;
  sums.weight_decay = config_.weight_decay * norm2;
  sums.total = sums.policy + sums.value + sums.similarity + sums.weight_decay;
  return sums;
}

LossBreakdown Model::loss_gradient(const TrainingBatch& batch, Vec& grad, int threads) const {
  if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
  else std::fill(grad.begin(), grad.end(), 0.0);

  const int K = batch.unroll;
  const int steps = K + 1;
  const double* p = params_.data();
  const double inv = batch.size > 0 ? 1.0 / batch.size : 0.0;
  const int num_chunks = (batch.size + kChunkSize - 1) / kChunkSize;

  std::mutex mu;
  std::condition_variable cv;
  int next_reduce = 0;
  std::atomic<int> next_chunk{0};
  LossBreakdown sums;

  auto worker = [&]() {
    Vec local_grad(params_.size(), 0.0);
    SampleWork work;
    for (;;) {
      const int chunk = next_chunk.fetch_add(1);
      if (chunk >= num_chunks) break;
      std::fill(local_grad.begin(), local_grad.end(), 0.0);
      LossBreakdown local;
      const int begin = chunk * kChunkSize;
      const int end = std::min(batch.size, begin + kChunkSize);

      for (int i = begin; i < end; ++i) {
        // ---- forward, keeping activations ----
        work.dyn.assign(K, TowerActs{});
        work.pred.assign(steps, PredActs{});
        work.proj.assign(steps, MlpActs{});
        work.predr.assign(steps, MlpActs{});
        work.latents.assign(steps, Vec{});
        work.sim_targets.assign(steps, Vec{});

        work.latents[0] = tower_forward(
            p, nets_->representation, batch.obs.data() + static_cast<size_t>(i) * 27, &work.rep);
        for (int tau = 0; tau <= K; ++tau) {
          const size_t ti = static_cast<size_t>(i) * steps + tau;
          const double step_weight = tau == 0 ? 1.0 : 1.0 / K;
          Activations acts;
          run_prediction(work.latents[tau], acts.pred.logits.data(), &acts.pred.value, &acts);
          work.pred[tau] = acts.pred;

          if (batch.policy_mask[ti] > 0.0) {
            std::array<double, 9> probs{};
            net::softmax(work.pred[tau].logits.data(), probs.data(), kNumCells);
            double ce = 0.0;
            for (int a = 0; a < kNumCells; ++a) {
              const double target = batch.policy_target[ti * 9 + a];
              if (target > 0.0) ce -= target * std::log(std::max(probs[a], 1e-300));
            }
            local.policy += step_weight * config_.policy_loss_weight * ce;
          }
          const double dv = work.pred[tau].value - batch.value_target[ti];
          local.value += step_weight * config_.value_loss_weight * dv * dv;

          if (tau > 0 && batch.sim_mask[ti] > 0.0) {
            // online branch with cached activations
            MlpActs& proj = work.proj[tau];
            proj.in = work.latents[tau];
            proj.hid_pre.resize(config_.projector_hidden);
            nets_->projector_hidden.forward(p, proj.in.data(), proj.hid_pre.data());
            Vec hid_r(config_.projector_hidden);
            net::relu(proj.hid_pre.data(), hid_r.data(), hid_r.size());
            proj.out.resize(config_.projector_out);
            nets_->projector_out.forward(p, hid_r.data(), proj.out.data());

            MlpActs& predr = work.predr[tau];
            predr.in = proj.out;
            predr.hid_pre.resize(config_.predictor_hidden);
            nets_->predictor_hidden.forward(p, predr.in.data(), predr.hid_pre.data());
            Vec phid_r(config_.predictor_hidden);
            net::relu(predr.hid_pre.data(), phid_r.data(), phid_r.size());
            predr.out.resize(config_.predictor_out);
            nets_->predictor_out.forward(p, phid_r.data(), predr.out.data());

            // target branch, gradient stopped
            Vec target_latent = tower_forward(
                p, nets_->representation, batch.target_obs.data() + ti * 27, nullptr);
            work.sim_targets[tau] =
                similarity_heads(LatentState{target_latent, 0, 0}).projection;
            local.similarity +=
                step_weight * config_.similarity_loss_weight *
                (-cosine_similarity(predr.out, work.sim_targets[tau]));
          }

          if (tau < K) {
            Vec input(static_cast<size_t>(config_.channels + 1) * 9, 0.0);
            std::copy(work.latents[tau].begin(), work.latents[tau].end(), input.begin());
            input[work.latents[tau].size() + batch.actions[static_cast<size_t>(i) * K + tau]] =
                1.0;
            work.latents[tau + 1] = tower_forward(p, nets_->dynamics, input.data(), &work.dyn[tau]);
          }
        }

        // ---- backward ----
        std::vector<Vec> glat(steps);
        for (int tau = 0; tau < steps; ++tau) glat[tau].assign(work.latents[tau].size(), 0.0);

        for (int tau = K; tau >= 0; --tau) {
          const size_t ti = static_cast<size_t>(i) * steps + tau;
          const double step_weight = (tau == 0 ? 1.0 : 1.0 / K) * inv;
          const PredActs& pa = work.pred[tau];

          std::array<double, 9> glogits{};
          if (batch.policy_mask[ti] > 0.0) {
            std::array<double, 9> probs{};
            net::softmax(pa.logits.data(), probs.data(), kNumCells);
            double target_sum = 0.0;
            for (int a = 0; a < kNumCells; ++a) target_sum += batch.policy_target[ti * 9 + a];
            const double coeff = step_weight * config_.policy_loss_weight;
            for (int a = 0; a < kNumCells; ++a) {
              glogits[a] =
                  coeff * (probs[a] * target_sum - batch.policy_target[ti * 9 + a]);
            }
          }
          const double gv = step_weight * config_.value_loss_weight * 2.0 *
                            (pa.value - batch.value_target[ti]);

          // prediction heads backward
          Vec glatent_from_pred(work.latents[tau].size(), 0.0);
          {
            Vec gtmp(work.latents[tau].size(), 0.0);
            nets_->policy_head.backward(p, pa.latent_in.data(), glogits.data(), gtmp.data(),
                                        local_grad.data());
            for (size_t j = 0; j < gtmp.size(); ++j) glatent_from_pred[j] += gtmp[j];

            const double g_pre = gv * (1.0 - pa.value * pa.value);
            Vec vr(config_.bottleneck_channels);
            net::relu(pa.value_hidden_pre.data(), vr.data(), vr.size());
            Vec gvr(config_.bottleneck_channels, 0.0);
            nets_->value_out.backward(p, vr.data(), &g_pre, gvr.data(), local_grad.data());
            Vec gvh(config_.bottleneck_channels);
            net::relu_backward(pa.value_hidden_pre.data(), gvr.data(), gvh.data(), gvh.size());
            nets_->value_hidden.backward(p, pa.latent_in.data(), gvh.data(), gtmp.data(),
                                         local_grad.data());
            for (size_t j = 0; j < gtmp.size(); ++j) glatent_from_pred[j] += gtmp[j];
          }
          for (size_t j = 0; j < glatent_from_pred.size(); ++j) glat[tau][j] += glatent_from_pred[j];

          if (tau > 0 && batch.sim_mask[ti] > 0.0) {
            const double coeff = step_weight * config_.similarity_loss_weight;
            const MlpActs& predr = work.predr[tau];
            const MlpActs& proj = work.proj[tau];
            Vec gp2;
            neg_cosine_grad(predr.out, work.sim_targets[tau], coeff, gp2);

            Vec phid_r(config_.predictor_hidden);
            net::relu(predr.hid_pre.data(), phid_r.data(), phid_r.size());
            Vec gphid_r(config_.predictor_hidden, 0.0);
            nets_->predictor_out.backward(p, phid_r.data(), gp2.data(), gphid_r.data(),
                                          local_grad.data());
            Vec gphid(config_.predictor_hidden);
            net::relu_backward(predr.hid_pre.data(), gphid_r.data(), gphid.data(), gphid.size());
            Vec gp1(config_.projector_out, 0.0);
            nets_->predictor_hidden.backward(p, predr.in.data(), gphid.data(), gp1.data(),
                                             local_grad.data());

            Vec hid_r(config_.projector_hidden);
            net::relu(proj.hid_pre.data(), hid_r.data(), hid_r.size());
            Vec ghid_r(config_.projector_hidden, 0.0);
            nets_->projector_out.backward(p, hid_r.data(), gp1.data(), ghid_r.data(),
                                          local_grad.data());
            Vec ghid(config_.projector_hidden);
            net::relu_backward(proj.hid_pre.data(), ghid_r.data(), ghid.data(), ghid.size());
            Vec glatent(work.latents[tau].size(), 0.0);
            nets_->projector_hidden.backward(p, proj.in.data(), ghid.data(), glatent.data(),
                                             local_grad.data());
            for (size_t j = 0; j < glatent.size(); ++j) glat[tau][j] += glatent[j];
          }

          if (tau > 0) {
            Vec gin;
            tower_backward(p, nets_->dynamics, work.dyn[tau - 1], glat[tau], &gin,
                           local_grad.data());
            const double s = config_.dynamics_grad_scale;
            for (size_t j = 0; j < glat[tau - 1].size(); ++j) {
              glat[tau - 1][j] += s * gin[j];  // action plane gradient is dropped
            }
          }
        }
        tower_backward(p, nets_->representation, work.rep, glat[0], nullptr, local_grad.data());
      }

      // ordered reduction: chunk k folds in only after chunk k-1
      {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return next_reduce == chunk; });
        for (size_t j = 0; j < grad.size(); ++j) grad[j] += local_grad[j];
        sums.policy += local.policy;
        sums.value += local.value;
        sums.similarity += local.similarity;
        ++next_reduce;
      }
      cv.notify_all();
    }
  };

  const int worker_count = std::max(1, std::min(threads, num_chunks));
  if (worker_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(worker_count);
    for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  sums.policy *= inv;
  sums.value *= inv;
  sums.similarity *= inv;
  double norm2 = 0.0;
  const Vec& values = params_.values();
  for (size_t j = 0; j < values.size(); ++j) {
    norm2 += values[j] * values[j];
    grad[j] += 2.0 * config_.weight_decay * values[j];
  }
  sums.weight_decay = config_.weight_decay * norm2;
  sums.total = sums.policy + sums.value + sums.similarity + sums.weight_decay;
  return sums;
}

LossBreakdown Model::train_step(const TrainingBatch& batch, int threads) {
  Vec grad;
  const LossBreakdown loss = loss_gradient(batch, grad, threads);
  if (!std::isfinite(loss.total)) {
    throw std::runtime_error("non-finite training loss: policy=" + std::to_string(loss.policy) +
                             " value=" + std::to_string(loss.value) +
                             " similarity=" + std::to_string(loss.similarity));
  }
  for (const double g : grad) {
    if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in training step");
  }

  ++adam_step_;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(adam_step_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(adam_step_));
  Vec& values = params_.values();
  for (size_t j = 0; j < values.size(); ++j) {
    adam_m_[j] = b1 * adam_m_[j] + (1.0 - b1) * grad[j];
    adam_v_[j] = b2 * adam_v_[j] + (1.0 - b2) * grad[j] * grad[j];
    const double mhat = adam_m_[j] / bias1;
    const double vhat = adam_v_[j] / bias2;
    values[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + eps);
  }
  return loss;
}

namespace {
constexpr char kCheckpointMagic[4] = {'M', 'Z', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

void Model::save_checkpoint(const std::string& path) const {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = nlohmann::json::parse(config_.to_json());
  header["epoch"] = epoch_stamp_;
  header["adam_step"] = adam_step_;
  header["run_config_hash"] = run_config_hash_;
  header["run_seed"] = run_seed_;
  header["param_count"] = params_.size();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : params_.entries()) {
    tensors.push_back({{"name", e.name}, {"offset", e.offset}, {"size", e.size}});
  }
  header["tensors"] = tensors;
  const std::string head = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 4);
    const uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const uint64_t head_len = head.size();
    out.write(reinterpret_cast<const char*>(&head_len), sizeof head_len);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    const auto write_vec = [&out](const Vec& v) {
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    write_vec(params_.values());
    write_vec(adam_m_);
    write_vec(adam_v_);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<Model> Model::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof head_len);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);

  const auto header = nlohmann::json::parse(head);
  const NetworkConfig config = NetworkConfig::from_json(header.at("config").dump());
  auto model = std::make_unique<Model>(config, /*seed=*/0);
  if (model->params_.size() != header.at("param_count").get<size_t>()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  const auto read_vec = [&in, &path](Vec& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint tensors: " + path);
  };
  read_vec(model->params_.values());
  read_vec(model->adam_m_);
  read_vec(model->adam_v_);
  model->epoch_stamp_ = header.at("epoch").get<int>();
  model->adam_step_ = header.at("adam_step").get<long>();
  model->run_config_hash_ = header.value("run_config_hash", uint64_t{0});
  model->run_seed_ = header.value("run_seed", uint64_t{0});
  return model;
}

std::unique_ptr<Model> Model::load_checkpoint(const std::string& path,
                                              const NetworkConfig& expected) {
  auto model = load_checkpoint(path);
  const NetworkConfig& found = model->config();
  auto check_int = [&](const char* field, int a, int b) {
    if (a != b) {
      throw std::runtime_error(std::string("checkpoint config mismatch in field '") + field +
                               "': expected " + std::to_string(b) + ", found " +
                               std::to_string(a));
    }
  };
  check_int("residual_blocks", found.residual_blocks, expected.residual_blocks);
  check_int("channels", found.channels, expected.channels);
  check_int("bottleneck_channels", found.bottleneck_channels, expected.bottleneck_channels);
  check_int("projector_hidden", found.projector_hidden, expected.projector_hidden);
  check_int("projector_out", found.projector_out, expected.projector_out);
  check_int("predictor_hidden", found.predictor_hidden, expected.predictor_hidden);
  check_int("predictor_out", found.predictor_out, expected.predictor_out);
  check_int("unroll_steps", found.unroll_steps, expected.unroll_steps);
  return model;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%06d.ckpt", epoch);
  return buf;
}

std::vector<std::pair<int, std::string>> list_checkpoints(const std::string& dir) {
  std::vector<std::pair<int, std::string>> out;
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    int epoch = -1;
    if (std::sscanf(name.c_str(), "epoch-%d.ckpt", &epoch) == 1 &&
        name == checkpoint_name(epoch)) {
      out.emplace_back(epoch, entry.path().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mz
