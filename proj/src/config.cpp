#include "mz/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mz {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig config;
  std::istringstream in(text);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_number) +
                                  " is not a key/value pair: " + line);
    }
    const std::string key = trim(line.substr(0, colon));
    const std::string value = trim(line.substr(colon + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_number) + " has no key");
    }
    config.values_[key] = value;
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stoi(it->second);
}

long KeyValueConfig::get_long(const std::string& key, long fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stol(it->second);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stod(it->second);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "' has a non-boolean value: " + v);
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out += ": ";
    out += value;
    out += '\n';
  }
  return out;
}

uint64_t KeyValueConfig::hash() const {
  const std::string canonical = serialize();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig ExperimentConfig::profile(const std::string& name) {
  ExperimentConfig cfg;  // defaults are the full-scale "paper" profile
  if (name == "paper") return cfg;
  if (name == "desk") {
    cfg.network.channels = 32;
    cfg.network.residual_blocks = 2;
    cfg.network.bottleneck_channels = 16;
    cfg.network.projector_hidden = 64;
    cfg.network.projector_out = 64;
    cfg.network.predictor_hidden = 32;
    cfg.network.predictor_out = 64;
    cfg.games_per_epoch = 100;
    cfg.steps_per_epoch = 10;
    cfg.training_steps = 1500;  // 150 epochs
    cfg.window_size = 2000;
    cfg.batch_size = 64;
    return cfg;
  }
  throw std::invalid_argument("unknown profile: " + name);
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  ExperimentConfig cfg = profile(kv.get_string("run.profile", "paper"));
  NetworkConfig& net = cfg.network;
  net.residual_blocks = kv.get_int("model.residual_blocks", net.residual_blocks);
  net.channels = kv.get_int("model.channels", net.channels);
  net.bottleneck_channels = kv.get_int("model.bottleneck_channels", net.bottleneck_channels);
  net.projector_hidden = kv.get_int("model.projector_hidden", net.projector_hidden);
  net.projector_out = kv.get_int("model.projector_out", net.projector_out);
  net.predictor_hidden = kv.get_int("model.predictor_hidden", net.predictor_hidden);
  net.predictor_out = kv.get_int("model.predictor_out", net.predictor_out);
  net.unroll_steps = kv.get_int("training.unroll_steps", net.unroll_steps);
  net.policy_loss_weight = kv.get_double("training.loss.c1", net.policy_loss_weight);
  net.value_loss_weight = kv.get_double("training.loss.c2", net.value_loss_weight);
  net.similarity_loss_weight = kv.get_double("training.loss.c3", net.similarity_loss_weight);
  net.weight_decay = kv.get_double("training.optimizer.weight_decay", net.weight_decay);
  net.learning_rate = kv.get_double("training.optimizer.learning_rate", net.learning_rate);

  PlanConfig& plan = cfg.planning;
  plan.simulations = kv.get_int("planning.simulations", plan.simulations);
  plan.initial_candidates = kv.get_int("planning.initial_m", plan.initial_candidates);
  plan.c_visit = kv.get_double("planning.c_visit", plan.c_visit);
  plan.c_scale = kv.get_double("planning.c_scale", plan.c_scale);
  plan.dirichlet_alpha = kv.get_double("planning.root_noise.dirichlet_alpha", plan.dirichlet_alpha);
  plan.dirichlet_fraction =
      kv.get_double("planning.root_noise.exploration_fraction", plan.dirichlet_fraction);

  cfg.exploration_on = kv.get_bool("decision.exploration", cfg.exploration_on);
  cfg.exploration_temperature =
      kv.get_double("decision.exploration_temperature", cfg.exploration_temperature);
  cfg.target_mode =
      target_mode_from_name(kv.get_string("training.value_target", target_mode_name(cfg.target_mode)));

  cfg.window_size = kv.get_int("experience.window_size", cfg.window_size);
  cfg.games_per_epoch = kv.get_int("selfplay.games_per_epoch", cfg.games_per_epoch);
  cfg.steps_per_epoch = kv.get_int("training.steps_per_epoch", cfg.steps_per_epoch);
  cfg.training_steps = kv.get_long("training.steps", cfg.training_steps);
  cfg.batch_size = kv.get_int("training.batch_size", cfg.batch_size);
  cfg.symmetry_augment = kv.get_bool("training.symmetry", cfg.symmetry_augment);

  cfg.eval_gumbel_sample = kv.get_string("eval.gumbel", cfg.eval_gumbel_sample ? "sample" : "zero") ==
                           "sample";
  cfg.eval_gumbel_seeds = kv.get_int("eval.gumbel_seeds", cfg.eval_gumbel_seeds);
  cfg.eval_temperature = kv.get_double("eval.temperature", cfg.eval_temperature);
  cfg.eval_stride = kv.get_int("eval.stride", cfg.eval_stride);

  cfg.seed = static_cast<uint64_t>(kv.get_long("run.seed", static_cast<long>(cfg.seed)));
  cfg.threads = kv.get_int("run.threads", cfg.threads);
  cfg.validate();
  return cfg;
}

KeyValueConfig ExperimentConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("model.residual_blocks", std::to_string(network.residual_blocks));
  kv.set("model.channels", std::to_string(network.channels));
  kv.set("model.bottleneck_channels", std::to_string(network.bottleneck_channels));
  kv.set("model.projector_hidden", std::to_string(network.projector_hidden));
  kv.set("model.projector_out", std::to_string(network.projector_out));
  kv.set("model.predictor_hidden", std::to_string(network.predictor_hidden));
  kv.set("model.predictor_out", std::to_string(network.predictor_out));
  kv.set("training.unroll_steps", std::to_string(network.unroll_steps));
  kv.set("training.loss.c1", format_double(network.policy_loss_weight));
  kv.set("training.loss.c2", format_double(network.value_loss_weight));
  kv.set("training.loss.c3", format_double(network.similarity_loss_weight));
  kv.set("training.optimizer.weight_decay", format_double(network.weight_decay));
  kv.set("training.optimizer.learning_rate", format_double(network.learning_rate));
  kv.set("planning.simulations", std::to_string(planning.simulations));
  kv.set("planning.initial_m", std::to_string(planning.initial_candidates));
  kv.set("planning.c_visit", format_double(planning.c_visit));
  kv.set("planning.c_scale", format_double(planning.c_scale));
  kv.set("planning.root_noise.dirichlet_alpha", format_double(planning.dirichlet_alpha));
  kv.set("planning.root_noise.exploration_fraction", format_double(planning.dirichlet_fraction));
  kv.set("decision.exploration", exploration_on ? "on" : "off");
  kv.set("decision.exploration_temperature", format_double(exploration_temperature));
  kv.set("training.value_target", target_mode_name(target_mode));
  kv.set("experience.window_size", std::to_string(window_size));
  kv.set("selfplay.games_per_epoch", std::to_string(games_per_epoch));
  kv.set("training.steps_per_epoch", std::to_string(steps_per_epoch));
  kv.set("training.steps", std::to_string(training_steps));
  kv.set("training.batch_size", std::to_string(batch_size));
  kv.set("training.symmetry", symmetry_augment ? "on" : "off");
  kv.set("eval.gumbel", eval_gumbel_sample ? "sample" : "zero");
  kv.set("eval.gumbel_seeds", std::to_string(eval_gumbel_seeds));
  kv.set("eval.temperature", format_double(eval_temperature));
  kv.set("eval.stride", std::to_string(eval_stride));
  kv.set("run.seed", std::to_string(seed));
  return kv;  // threads deliberately excluded: results do not depend on them
}

void ExperimentConfig::validate() const {
  network.validate();
  planning.validate();
  if (window_size < 1) throw std::invalid_argument("experience.window_size must be >= 1");
  if (games_per_epoch < 1) throw std::invalid_argument("selfplay.games_per_epoch must be >= 1");
  if (steps_per_epoch < 1) throw std::invalid_argument("training.steps_per_epoch must be >= 1");
  if (training_steps < steps_per_epoch) {
    throw std::invalid_argument("training.steps must cover at least one epoch");
  }
  if (batch_size < 1) throw std::invalid_argument("training.batch_size must be >= 1");
  if (exploration_temperature <= 0.0) {
    throw std::invalid_argument("decision.exploration_temperature must be > 0");
  }
  if (eval_gumbel_seeds < 1) throw std::invalid_argument("eval.gumbel_seeds must be >= 1");
  if (eval_stride < 1) throw std::invalid_argument("eval.stride must be >= 1");
}

std::string target_mode_name(ValueTargetMode mode) {
  switch (mode) {
    case ValueTargetMode::kHybridInitial: return "hybrid_initial";
    case ValueTargetMode::kHybridImproved: return "hybrid_improved";
    case ValueTargetMode::kPlain: return "plain";
  }
  return "hybrid_initial";
}

ValueTargetMode target_mode_from_name(const std::string& name) {
  if (name == "hybrid_initial") return ValueTargetMode::kHybridInitial;
  if (name == "hybrid_improved") return ValueTargetMode::kHybridImproved;
  if (name == "plain") return ValueTargetMode::kPlain;
  throw std::invalid_argument("unknown value-target mode: " + name);
}

}  // namespace mz
