#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mz/config.hpp"
#include "mz/evaluator.hpp"
#include "mz/experience.hpp"
#include "mz/model.hpp"
#include "mz/oracle.hpp"

namespace mz {

// Epoch loop: a self-play phase over a fixed parameter snapshot, a training
// phase, a checkpoint per epoch; plus the named experiment suites.

struct EpochReport {
  int epoch = 0;
  int games = 0;
  int steps = 0;
  LossBreakdown mean_loss;
  std::optional<double> exploring_value_error;  // vs. the solver, this epoch's games
  double entropy_h00 = 0.0;
  std::string checkpoint_path;
  double wall_seconds = 0.0;
};

// One self-play game against the environment with the hybrid policy.
Episode play_episode(const Model& model, const ExperimentConfig& cfg, uint64_t game_seed);

EpochReport run_epoch(const ExperimentConfig& cfg, Model& model, ReplayWindow& window, int epoch,
                      const std::string& run_dir, const oracle::DecisionGraph* graph);

// Trains until the configured step budget, one checkpoint per epoch plus the
// initial network; resumable from the last checkpoint with identical results.
// Rejects resuming with a changed configuration. A positive stop_after_epoch
// pauses the run early (same on-disk state as an interrupt between epochs).
std::vector<EpochReport> run_training(const ExperimentConfig& cfg, const std::string& run_dir,
                                      const oracle::DecisionGraph* graph,
                                      int stop_after_epoch = 0);

// Identity of a finished run: run_dir keyed by the config hash (seed included).
std::string run_directory(const std::string& root, const ExperimentConfig& cfg);
bool run_complete(const std::string& run_dir, const ExperimentConfig& cfg);

struct SuiteArm {
  std::string name;
  ExperimentConfig config;              // seed is filled per sample at run time
  std::vector<EvalConfig> evaluations;  // audit variants per checkpoint
};

// Named suites. Arms of one suite differ from the base configuration in
// exactly the declared switch, which is asserted by config diff.
std::vector<SuiteArm> suite_arms(const std::string& suite, const ExperimentConfig& base);

// Trains `seeds.size()` independently seeded runs per arm, audits every
// checkpoint, and writes raw per-epoch per-seed rows:
//   <out_dir>/<suite>/audit.csv    experiment,seed,epoch,player,mode,scope,count,eval_cfg
//   <out_dir>/<suite>/metrics.csv  experiment,seed,epoch,metric,value
// Runs and per-checkpoint audits are cached under <out_dir>/runs and reused;
// partial suites resume per seed.
void run_suite(const std::string& suite, const ExperimentConfig& base,
               const std::vector<uint64_t>& seeds, const std::string& out_dir,
               const oracle::DecisionGraph& graph);

}  // namespace mz
