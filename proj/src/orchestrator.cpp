#include "mz/orchestrator.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mz/decision.hpp"
#include "mz/planner.hpp"

namespace mz {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kInitStream = 1;
constexpr uint64_t kGameStream = 2;
constexpr uint64_t kTrainStream = 3;
constexpr uint64_t kAuditSeed = 0xe7a1;  // fixed evaluation seed set

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string replay_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "replay-%06d.bin", epoch);
  return buf;
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path);
  out << line << '\n';
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

Episode play_episode(const Model& model, const ExperimentConfig& cfg, uint64_t game_seed) {
  Rng rng(game_seed);
  HybridSchedule schedule;
  schedule.t_start_normal = draw_t_start_normal(kMaxGameLength, cfg.exploration_on, rng);
  schedule.exploration_temperature = cfg.exploration_temperature;
  schedule.t_end = kMaxGameLength;
  schedule.exploration_on = cfg.exploration_on;

  Episode episode;
  episode.t_start_normal = schedule.t_start_normal;
  episode.acting_epoch = model.epoch_stamp();
  episode.seed = game_seed;

  GameState state = initial_state();
  episode.observations.push_back(observe(state));
  int t = 0;
  while (!is_terminal(state)) {
    const PlanResult result =
        plan(model, episode.observations.back(), legal_actions(state), cfg.planning, rng);
    const DecisionRecord record = decide(t, schedule, result, rng);
    state = apply_action(state, record.action);
    episode.records.push_back(record);
    episode.observations.push_back(observe(state));
    ++t;
  }
  episode.reward_to_last_mover = terminal_result(state)->reward_to_last_mover;
  return episode;
}

EpochReport run_epoch(const ExperimentConfig& cfg, Model& model, ReplayWindow& window, int epoch,
                      const std::string& run_dir, const oracle::DecisionGraph* graph) {
  const auto start = std::chrono::steady_clock::now();
  EpochReport report;
  report.epoch = epoch;

  // Self-play phase: every game draws from its own seed stream, results are
  // appended in game-index order, so the window contents are independent of
  // the worker count.
  std::vector<Episode> games(cfg.games_per_epoch);
  {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int g = next.fetch_add(1);
        if (g >= cfg.games_per_epoch) break;
        games[g] = play_episode(
            model, cfg, derive_seed(cfg.seed, kGameStream, static_cast<uint64_t>(epoch), g));
      }
    };
    const int workers = std::max(1, std::min(cfg.threads, cfg.games_per_epoch));
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
  }
  if (graph) report.exploring_value_error = exploring_value_error(games, *graph);
  for (Episode& episode : games) window.store(std::move(episode));
  report.games = cfg.games_per_epoch;

  // Training phase: single writer.
  SampleOptions options;
  options.batch_size = cfg.batch_size;
  options.unroll_steps = cfg.network.unroll_steps;
  options.symmetry_augment = cfg.symmetry_augment;
  options.target_mode = cfg.target_mode;
  LossBreakdown mean;
  for (int step = 0; step < cfg.steps_per_epoch; ++step) {
    Rng rng(derive_seed(cfg.seed, kTrainStream, static_cast<uint64_t>(epoch), step));
    const TrainingBatch batch = sample_batch(window, options, rng);
    const LossBreakdown loss = model.train_step(batch, cfg.threads);
    mean.total += loss.total;
    mean.policy += loss.policy;
    mean.value += loss.value;
    mean.similarity += loss.similarity;
    mean.weight_decay += loss.weight_decay;
  }
  const double inv = 1.0 / cfg.steps_per_epoch;
  mean.total *= inv;
  mean.policy *= inv;
  mean.value *= inv;
  mean.similarity *= inv;
  mean.weight_decay *= inv;
  report.steps = cfg.steps_per_epoch;
  report.mean_loss = mean;

  model.set_epoch_stamp(epoch);
  model.set_run_stamp(cfg.hash(), cfg.seed);
  fs::create_directories(run_dir + "/checkpoints");
  // The window snapshot is written before (and the previous one removed
  // after) the checkpoint, so a clean resume state always exists on disk.
  window.persist(run_dir + "/" + replay_name(epoch), cfg.hash());
  report.checkpoint_path = run_dir + "/checkpoints/" + checkpoint_name(epoch);
  model.save_checkpoint(report.checkpoint_path);
  if (epoch > 1) fs::remove(run_dir + "/" + replay_name(epoch - 1));
  report.entropy_h00 = entropy_at_empty_board(model);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ostringstream row;
  row << epoch << ',' << report.games << ',' << report.steps << ',' << fmt(mean.total) << ','
      << fmt(mean.policy) << ',' << fmt(mean.value) << ',' << fmt(mean.similarity) << ','
      << fmt(mean.weight_decay) << ','
      << (report.exploring_value_error ? fmt(*report.exploring_value_error) : std::string())
      << ',' << fmt(report.entropy_h00) << ',' << fmt(report.wall_seconds);
  append_line(run_dir + "/epochs.csv", row.str());
  return report;
}

std::vector<EpochReport> run_training(const ExperimentConfig& cfg, const std::string& run_dir,
                                      const oracle::DecisionGraph* graph,
                                      int stop_after_epoch) {
  cfg.validate();
  fs::create_directories(run_dir + "/checkpoints");

  const std::string config_path = run_dir + "/config.conf";
  if (fs::exists(config_path)) {
    const KeyValueConfig existing = KeyValueConfig::load(config_path);
    if (existing.hash() != cfg.to_kv().hash()) {
      throw std::runtime_error("refusing to resume " + run_dir + " with a changed configuration");
    }
  } else {
    std::ofstream out(config_path);
    out << cfg.to_kv().serialize();
  }

  std::unique_ptr<Model> model;
  ReplayWindow window(cfg.window_size);
  int epoch_start = 0;
  const auto checkpoints = list_checkpoints(run_dir + "/checkpoints");
  if (checkpoints.empty()) {
    model = std::make_unique<Model>(cfg.network, derive_seed(cfg.seed, kInitStream));
    model->set_epoch_stamp(0);
    model->set_run_stamp(cfg.hash(), cfg.seed);
    model->save_checkpoint(run_dir + "/checkpoints/" + checkpoint_name(0));
    const std::string header =
        "epoch,games,steps,loss_total,loss_policy,loss_value,loss_similarity,loss_decay,"
        "exploring_value_error,entropy_h00,wall_seconds";
    std::ofstream out(run_dir + "/epochs.csv");
    out << header << '\n';
  } else {
    model = Model::load_checkpoint(checkpoints.back().second, cfg.network);
    epoch_start = checkpoints.back().first;
    if (epoch_start > 0) window.restore(run_dir + "/" + replay_name(epoch_start), cfg.hash());
  }

  std::vector<EpochReport> reports;
  const int last_epoch = stop_after_epoch > 0 ? std::min(stop_after_epoch, cfg.epochs())
                                              : cfg.epochs();
  for (int epoch = epoch_start + 1; epoch <= last_epoch; ++epoch) {
    reports.push_back(run_epoch(cfg, *model, window, epoch, run_dir, graph));
  }
  return reports;
}

std::string run_directory(const std::string& root, const ExperimentConfig& cfg) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(cfg.hash()));
  return root + "/runs/" + buf;
}

bool run_complete(const std::string& run_dir, const ExperimentConfig& cfg) {
  const auto checkpoints = list_checkpoints(run_dir + "/checkpoints");
  return !checkpoints.empty() && checkpoints.back().first >= cfg.epochs();
}

namespace {

EvalConfig eval_variant(const ExperimentConfig& cfg, bool gumbel_sample) {
  EvalConfig eval;
  eval.plan = cfg.planning;
  eval.gumbel_sample = gumbel_sample;
  eval.gumbel_seeds = cfg.eval_gumbel_seeds;
  eval.temperature = cfg.eval_temperature;
  eval.seed = kAuditSeed;
  eval.threads = cfg.threads;
  return eval;
}

// Arms of an A/B suite must share every parameter except the declared switch.
void assert_single_switch(const ExperimentConfig& a, const ExperimentConfig& b,
                          const std::string& expected_key) {
  const auto va = a.to_kv().values();
  const auto vb = b.to_kv().values();
  std::vector<std::string> diff;
  for (const auto& [key, value] : va) {
    if (key == "run.seed") continue;
    if (vb.at(key) != value) diff.push_back(key);
  }
  if (diff.size() != 1 || diff.front() != expected_key) {
    std::string got;
    for (const auto& d : diff) got += d + " ";
    throw std::logic_error("suite arms must differ exactly in " + expected_key + ", got: " + got);
  }
}

// Audits every checkpoint of a finished run, caching one CSV per eval
// variant inside the run directory.
std::string audit_run_cached(const std::string& run_dir, const ExperimentConfig& cfg,
                             const EvalConfig& eval, const oracle::DecisionGraph& graph) {
  char suffix[48];
  std::snprintf(suffix, sizeof suffix, "%s-%016llx-s%d", eval.label().c_str(),
                static_cast<unsigned long long>(eval.hash()), cfg.eval_stride);
  const std::string path = run_dir + "/audit-" + suffix + ".csv";
  if (fs::exists(path)) return path;

  std::ostringstream out;
  out << "epoch,player,mode,scope,count\n";
  for (const auto& [epoch, ckpt_path] : list_checkpoints(run_dir + "/checkpoints")) {
    if (epoch % cfg.eval_stride != 0 && epoch != cfg.epochs()) continue;
    const auto model = Model::load_checkpoint(ckpt_path, cfg.network);
    const oracle::BadDecisionCount counts = audit_model(*model, graph, eval);
    for (const auto player : {oracle::Player::kX, oracle::Player::kO}) {
      for (const auto mode : {oracle::EvalMode::kIntuition, oracle::EvalMode::kPlanning}) {
        for (const bool optimal_scope : {false, true}) {
          out << epoch << ',' << (player == oracle::Player::kX ? 'x' : 'o') << ','
              << (mode == oracle::EvalMode::kIntuition ? 'I' : 'P') << ','
              << (optimal_scope ? "optimal" : "all") << ','
              << fmt(counts.at(player, mode, optimal_scope)) << '\n';
        }
      }
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream file(tmp);
    file << out.str();
  }
  fs::rename(tmp, path);
  return path;
}

struct MetricsRow {
  int epoch;
  std::string metric;
  double value;
};

}  // namespace

std::vector<SuiteArm> suite_arms(const std::string& suite, const ExperimentConfig& base) {
  std::vector<SuiteArm> arms;
  if (suite == "exploration_ab") {
    ExperimentConfig on = base;
    on.exploration_on = true;
    ExperimentConfig off = base;
    off.exploration_on = false;
    assert_single_switch(on, off, "decision.exploration");
    arms.push_back({"exploration_on", on, {eval_variant(on, true)}});
    arms.push_back({"exploration_off", off, {eval_variant(off, true)}});
  } else if (suite == "gumbel_playout_ab") {
    ExperimentConfig on = base;
    on.exploration_on = true;
    arms.push_back({"exploration_on", on, {eval_variant(on, true), eval_variant(on, false)}});
  } else if (suite == "dirichlet_ab" || suite == "entropy_track") {
    ExperimentConfig with = base;
    ExperimentConfig without = base;
    without.planning.dirichlet_fraction = 0.0;
    assert_single_switch(with, without, "planning.root_noise.exploration_fraction");
    const bool audits = suite == "dirichlet_ab";
    std::vector<EvalConfig> evals;
    if (audits) evals.push_back(eval_variant(with, true));
    arms.push_back({"dirichlet_on", with, evals});
    arms.push_back({"dirichlet_off", without, evals});
  } else if (suite == "compound_error") {
    ExperimentConfig initial = base;
    initial.target_mode = ValueTargetMode::kHybridInitial;
    ExperimentConfig improved = base;
    improved.target_mode = ValueTargetMode::kHybridImproved;
    assert_single_switch(initial, improved, "training.value_target");
    arms.push_back({"target_initial", initial, {eval_variant(initial, true)}});
    arms.push_back({"target_improved", improved, {eval_variant(improved, true)}});
  } else {
    throw std::invalid_argument("unknown suite: " + suite);
  }
  return arms;
}

void run_suite(const std::string& suite, const ExperimentConfig& base,
               const std::vector<uint64_t>& seeds, const std::string& out_dir,
               const oracle::DecisionGraph& graph) {
  const std::vector<SuiteArm> arms = suite_arms(suite, base);
  const std::string suite_dir = out_dir + "/" + suite;
  fs::create_directories(suite_dir);

  std::ostringstream audit_csv;
  std::ostringstream metrics_csv;
  audit_csv << "experiment,seed,epoch,player,mode,scope,count,eval_cfg\n";
  metrics_csv << "experiment,seed,epoch,metric,value\n";

  for (const SuiteArm& arm : arms) {
    for (const uint64_t seed : seeds) {
      ExperimentConfig cfg = arm.config;
      cfg.seed = seed;
      const std::string run_dir = run_directory(out_dir, cfg);
      if (!run_complete(run_dir, cfg)) {
        run_training(cfg, run_dir, &graph);
      }

      // Per-checkpoint audits, one variant at a time.
      std::vector<std::vector<MetricsRow>> headline_rows;
      for (const EvalConfig& eval : arm.evaluations) {
        const std::string audit_path = audit_run_cached(run_dir, cfg, eval, graph);
        const auto lines = read_lines(audit_path);
        std::vector<MetricsRow> headlines;
        double headline = 0.0, bad_intuition = 0.0, bad_planning = 0.0;
        int current_epoch = -1;
        auto flush_epoch = [&]() {
          if (current_epoch < 0) return;
          headlines.push_back({current_epoch, "headline_" + eval.label(), headline});
          headlines.push_back({current_epoch, "bad_I_" + eval.label(), bad_intuition});
          headlines.push_back({current_epoch, "bad_P_" + eval.label(), bad_planning});
        };
        for (size_t i = 1; i < lines.size(); ++i) {
          std::istringstream in(lines[i]);
          std::string epoch_s, player, mode, scope, count_s;
          std::getline(in, epoch_s, ',');
          std::getline(in, player, ',');
          std::getline(in, mode, ',');
          std::getline(in, scope, ',');
          std::getline(in, count_s, ',');
          const int epoch = std::stoi(epoch_s);
          if (epoch != current_epoch) {
            flush_epoch();
            current_epoch = epoch;
            headline = bad_intuition = bad_planning = 0.0;
          }
          if (scope == "all") {
            const double count = std::stod(count_s);
            headline += count;
            (mode == "I" ? bad_intuition : bad_planning) += count;
          }
          char evalbuf[24];
          std::snprintf(evalbuf, sizeof evalbuf, "%016llx",
                        static_cast<unsigned long long>(eval.hash()));
          audit_csv << arm.name << ',' << seed << ',' << lines[i] << ',' << evalbuf << '\n';
        }
        flush_epoch();
        headline_rows.push_back(std::move(headlines));
      }

      // Per-epoch training metrics recorded during the run.
      std::vector<MetricsRow> epoch_metrics;
      {
        const auto lines = read_lines(run_dir + "/epochs.csv");
        for (size_t i = 1; i < lines.size(); ++i) {
          std::istringstream in(lines[i]);
          std::vector<std::string> cols;
          std::string col;
          while (std::getline(in, col, ',')) cols.push_back(col);
          while (cols.size() < 11) cols.push_back("");
          const int epoch = std::stoi(cols[0]);
          epoch_metrics.push_back({epoch, "loss_total", std::stod(cols[3])});
          if (!cols[8].empty()) {
            epoch_metrics.push_back({epoch, "exploring_value_error", std::stod(cols[8])});
          }
          epoch_metrics.push_back({epoch, "entropy_h00", std::stod(cols[9])});
        }
      }
      // Entropy of the untrained network (epoch 0 has no epochs.csv row).
      {
        const auto model =
            Model::load_checkpoint(run_dir + "/checkpoints/" + checkpoint_name(0), cfg.network);
        epoch_metrics.push_back({0, "entropy_h00", entropy_at_empty_board(*model)});
      }

      for (const auto& rows : headline_rows) {
        for (const MetricsRow& row : rows) {
          metrics_csv << arm.name << ',' << seed << ',' << row.epoch << ',' << row.metric << ','
                      << fmt(row.value) << '\n';
        }
      }
      for (const MetricsRow& row : epoch_metrics) {
        metrics_csv << arm.name << ',' << seed << ',' << row.epoch << ',' << row.metric << ','
                    << fmt(row.value) << '\n';
      }
    }
  }

  {
    std::ofstream out(suite_dir + "/audit.csv", std::ios::trunc);
    out << audit_csv.str();
  }
  {
    std::ofstream out(suite_dir + "/metrics.csv", std::ios::trunc);
    out << metrics_csv.str();
  }
}

}  // namespace mz
