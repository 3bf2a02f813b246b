// Command-line front end: self-play training, checkpoint audits against the
// exhaustive solver, the named experiment suites, value-trajectory and
// entropy inspection, and figure-data export.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mz/config.hpp"
#include "mz/evaluator.hpp"
#include "mz/orchestrator.hpp"
#include "mz/oracle.hpp"
#include "mz/stats.hpp"

namespace {

using namespace mz;

ExperimentConfig load_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  KeyValueConfig kv =
      config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
  for (const std::string& entry : overrides) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got: " + entry);
    }
    kv.set(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return ExperimentConfig::from_kv(kv);
}

std::vector<uint64_t> parse_seeds(const std::string& csv) {
  std::vector<uint64_t> seeds;
  std::istringstream in(csv);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (!token.empty()) seeds.push_back(std::stoull(token));
  }
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

void print_counts(const oracle::BadDecisionCount& counts) {
  auto cell = [&](oracle::Player p, oracle::EvalMode m, bool opt) {
    return counts.at(p, m, opt);
  };
  std::printf("%-22s %8s %8s %8s %8s\n", "", "x:I", "o:I", "x:P", "o:P");
  std::printf("%-22s %8.2f %8.2f %8.2f %8.2f\n", "all decision nodes",
              cell(oracle::Player::kX, oracle::EvalMode::kIntuition, false),
              cell(oracle::Player::kO, oracle::EvalMode::kIntuition, false),
              cell(oracle::Player::kX, oracle::EvalMode::kPlanning, false),
              cell(oracle::Player::kO, oracle::EvalMode::kPlanning, false));
  std::printf("%-22s %8.2f %8.2f %8.2f %8.2f\n", "optimal-path nodes",
              cell(oracle::Player::kX, oracle::EvalMode::kIntuition, true),
              cell(oracle::Player::kO, oracle::EvalMode::kIntuition, true),
              cell(oracle::Player::kX, oracle::EvalMode::kPlanning, true),
              cell(oracle::Player::kO, oracle::EvalMode::kPlanning, true));
  std::printf("headline (sum of all-node cells): %.2f\n", counts.headline());
}

int cmd_stats(const std::string& suite, const std::string& dir, int rolling, double level);

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-play reinforcement learning for Tic-Tac-Toe with Gumbel tree-search "
               "planning and an exhaustive game-theoretic audit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint, seeds_csv = "1,2,3";
  std::string graph_cache = "graph.bin", actions_csv, suite_name, gumbel_mode = "sample";
  std::vector<std::string> overrides;
  int t_start = 0, threads = 2, gumbel_seeds = 0, rolling = 0;
  double level = 0.99;

  auto* train = app.add_subcommand("train", "Train one run (resumable per epoch)");
  train->add_option("--config", config_path, "key/value config file");
  train->add_option("--set", overrides, "override entries, key=value");
  train->add_option("--out", out_dir, "run directory");
  train->add_option("--graph-cache", graph_cache, "solved-graph cache file");

  auto* evaluate = app.add_subcommand("evaluate", "Audit a checkpoint against the solver");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--gumbel", gumbel_mode, "sample|zero");
  evaluate->add_option("--gumbel-seeds", gumbel_seeds, "averaged passes when sampling");
  evaluate->add_option("--threads", threads);
  evaluate->add_option("--graph-cache", graph_cache);
  evaluate->add_option("--config", config_path);
  evaluate->add_option("--set", overrides);

  auto* suite = app.add_subcommand("suite", "Run a named experiment suite");
  suite->add_option("name", suite_name,
                    "exploration_ab|gumbel_playout_ab|dirichlet_ab|compound_error|entropy_track")
      ->required();
  suite->add_option("--config", config_path);
  suite->add_option("--set", overrides);
  suite->add_option("--seeds", seeds_csv, "comma-separated run seeds");
  suite->add_option("--out", out_dir);
  suite->add_option("--graph-cache", graph_cache);

  auto* inspect = app.add_subcommand("inspect-values", "Value series along an action sequence");
  inspect->add_option("--checkpoint", checkpoint)->required();
  inspect->add_option("--actions", actions_csv, "comma-separated cells, e.g. 4,0,2")->required();
  inspect->add_option("--t-start", t_start, "recurrent continuation start time");

  auto* entropy_cmd = app.add_subcommand("entropy", "Policy entropy at the empty board");
  entropy_cmd->add_option("--checkpoint", checkpoint, "single checkpoint");
  entropy_cmd->add_option("--run", out_dir, "run directory: series over all checkpoints");

  auto* stats_cmd = app.add_subcommand("stats", "Figure data from a finished suite");
  stats_cmd->add_option("name", suite_name)->required();
  stats_cmd->add_option("--dir", out_dir, "suite output directory");
  stats_cmd->add_option("--rolling", rolling, "rolling-average window (0 = suite default)");
  stats_cmd->add_option("--level", level, "confidence level, 0.95 or 0.99");

  auto* export_cmd = app.add_subcommand("export", "Render the SVG for an exported figure CSV");
  export_cmd->add_option("name", suite_name)->required();
  export_cmd->add_option("--dir", out_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      ExperimentConfig cfg = load_config(config_path, overrides);
      const auto graph = oracle::load_or_build_graph(graph_cache);
      const auto reports = run_training(cfg, out_dir, &graph);
      for (const auto& r : reports) {
        std::printf("epoch %d: loss %.4f (p %.4f v %.4f sim %.4f) wall %.1fs\n", r.epoch,
                    r.mean_loss.total, r.mean_loss.policy, r.mean_loss.value,
                    r.mean_loss.similarity, r.wall_seconds);
      }
      std::printf("run complete: %s\n", out_dir.c_str());
    } else if (evaluate->parsed()) {
      const auto graph = oracle::load_or_build_graph(graph_cache);
      const auto model = Model::load_checkpoint(checkpoint);
      ExperimentConfig cfg = load_config(config_path, overrides);
      EvalConfig eval;
      eval.plan = cfg.planning;
      eval.gumbel_sample = gumbel_mode == "sample";
      eval.gumbel_seeds = gumbel_seeds > 0 ? gumbel_seeds : cfg.eval_gumbel_seeds;
      eval.temperature = cfg.eval_temperature;
      eval.threads = threads;
      print_counts(audit_model(*model, graph, eval));
      std::printf("entropy at empty board: %.4f\n", entropy_at_empty_board(*model));
    } else if (suite->parsed()) {
      ExperimentConfig cfg = load_config(config_path, overrides);
      const auto graph = oracle::load_or_build_graph(graph_cache);
      run_suite(suite_name, cfg, parse_seeds(seeds_csv), out_dir, graph);
      std::printf("suite %s written under %s/%s\n", suite_name.c_str(), out_dir.c_str(),
                  suite_name.c_str());
    } else if (inspect->parsed()) {
      const auto model = Model::load_checkpoint(checkpoint);
      std::vector<Action> actions;
      std::istringstream in(actions_csv);
      std::string token;
      while (std::getline(in, token, ',')) actions.push_back(Action{std::stoi(token)});
      const ValueTrajectory series = value_trajectory(*model, actions, t_start);
      std::printf("t_prime,value\n");
      for (size_t tp = 0; tp < series.values.size(); ++tp) {
        std::printf("%zu,%.6f\n", tp, series.values[tp]);
      }
    } else if (entropy_cmd->parsed()) {
      if (!checkpoint.empty()) {
        const auto model = Model::load_checkpoint(checkpoint);
        std::printf("%.6f\n", entropy_at_empty_board(*model));
      } else {
        std::printf("epoch,entropy_h00\n");
        for (const auto& [epoch, path] : list_checkpoints(out_dir + "/checkpoints")) {
          const auto model = Model::load_checkpoint(path);
          std::printf("%d,%.6f\n", epoch, entropy_at_empty_board(*model));
        }
      }
    } else if (stats_cmd->parsed() || export_cmd->parsed()) {
      return cmd_stats(suite_name, out_dir, rolling, level);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

namespace {

stats::SampleSeries rolled(const stats::SampleSeries& series, int window) {
  stats::SampleSeries out = series;
  for (auto& seed : out.per_seed) seed = stats::rolling_average(seed, window);
  return out;
}

int cmd_stats(const std::string& suite, const std::string& dir, int rolling, double level) {
  const std::string metrics = dir + "/" + suite + "/metrics.csv";
  const std::string out_base = dir + "/" + suite + "/";
  using stats::ConfidenceBand;
  std::vector<std::pair<std::string, ConfidenceBand>> bands;

  if (suite == "exploration_ab") {
    const auto on = stats::load_metric_series(metrics, "exploration_on", "headline_gumbel");
    const auto off = stats::load_metric_series(metrics, "exploration_off", "headline_gumbel");
    bands = {{"exploration_on", stats::t_confidence_band(on, level)},
             {"exploration_off", stats::t_confidence_band(off, level)}};
    stats::export_band_csv(out_base + "headline.csv", bands);
    stats::export_band_svg(out_base + "headline.svg", bands, "bad decisions per epoch");
    // with- vs without-tree-search split of the exploration-on arm
    const int window = rolling > 0 ? rolling : 100;
    const auto intuition = rolled(
        stats::load_metric_series(metrics, "exploration_on", "bad_I_gumbel"), window);
    const auto planning =
        rolled(stats::load_metric_series(metrics, "exploration_on", "bad_P_gumbel"), window);
    const std::vector<std::pair<std::string, ConfidenceBand>> split = {
        {"intuition", stats::t_confidence_band(intuition, 0.95)},
        {"planning", stats::t_confidence_band(planning, 0.95)}};
    stats::export_band_csv(out_base + "mode_split.csv", split);
    stats::export_band_svg(out_base + "mode_split.svg", split,
                           "bad decisions without vs with tree search");
    const auto& band_on = bands[0].second;
    const auto& band_off = bands[1].second;
    const size_t last = band_on.mean.size() - 1;
    const auto factor = stats::improvement_factor(band_off.mean[last], band_off.half_width[last],
                                                  band_on.mean[last], band_on.half_width[last]);
    if (factor.lower_bound_only) {
      std::printf("improvement factor (off/on) at final epoch: > %.1f\n", factor.factor);
    } else {
      std::printf("improvement factor (off/on) at final epoch: %.1f +- %.1f\n", factor.factor,
                  factor.uncertainty);
    }
  } else if (suite == "gumbel_playout_ab") {
    const int window = rolling > 0 ? rolling : 50;
    const auto sampled = stats::load_metric_series(metrics, "exploration_on", "headline_gumbel");
    const auto eager = stats::load_metric_series(metrics, "exploration_on", "headline_eager");
    const auto diff = rolled(stats::difference_paired(sampled, eager), window);
    bands = {{"gumbel_minus_eager", stats::t_confidence_band(diff, level)}};
    stats::export_band_csv(out_base + "playout_diff.csv", bands);
    stats::export_band_svg(out_base + "playout_diff.svg", bands,
                           "bad decisions: sampled minus eager playout");
  } else if (suite == "dirichlet_ab") {
    const int window = rolling > 0 ? rolling : 100;
    const auto with = rolled(stats::load_metric_series(metrics, "dirichlet_on", "headline_gumbel"),
                             window);
    const auto without =
        rolled(stats::load_metric_series(metrics, "dirichlet_off", "headline_gumbel"), window);
    bands = {{"without_minus_with", stats::difference_unpaired(without, with, level)}};
    stats::export_band_csv(out_base + "noise_diff.csv", bands);
    stats::export_band_svg(out_base + "noise_diff.svg", bands,
                           "bad decisions: trained without noise minus with noise");
  } else if (suite == "entropy_track" || suite == "compound_error") {
    const char* metric = suite == "entropy_track" ? "entropy_h00" : "exploring_value_error";
    const char* arm_a = suite == "entropy_track" ? "dirichlet_on" : "target_initial";
    const char* arm_b = suite == "entropy_track" ? "dirichlet_off" : "target_improved";
    bands = {{arm_a, stats::t_confidence_band(stats::load_metric_series(metrics, arm_a, metric),
                                              level)},
             {arm_b, stats::t_confidence_band(stats::load_metric_series(metrics, arm_b, metric),
                                              level)}};
    stats::export_band_csv(out_base + std::string(metric) + ".csv", bands);
    stats::export_band_svg(out_base + std::string(metric) + ".svg", bands, metric);
  } else {
    std::fprintf(stderr, "unknown suite for stats: %s\n", suite.c_str());
    return 1;
  }
  std::printf("figure data written under %s\n", out_base.c_str());
  return 0;
}

}  // namespace
