#pragma once

#include <vector>

namespace mz {

// One training batch of unroll sequences, already symmetry-expanded.
// Index layout per sample i and unroll step tau in [0, unroll]:
//   obs[i*27 ..]                    observation at the sample position (tau = 0)
//   target_obs[(i*(K+1)+tau)*27..]  observation at t+tau, for similarity targets
//   actions[i*K + tau]              action taken at t+tau (filler past terminal)
//   policy_target[(i*(K+1)+tau)*9..] improved-policy target (zeros when masked)
//   value_target[i*(K+1)+tau]       value target per schedule
//   policy_mask[i*(K+1)+tau]        0 past the terminal state
//   sim_mask[i*(K+1)+tau]           0 at tau = 0 and past the terminal state
struct TrainingBatch {
  int size = 0;
  int unroll = 0;
  std::vector<double> obs;
  std::vector<double> target_obs;
  std::vector<int> actions;
  std::vector<double> policy_target;
  std::vector<double> value_target;
  std::vector<double> policy_mask;
  std::vector<double> sim_mask;

  void resize(int samples, int unroll_steps) {
    size = samples;
    unroll = unroll_steps;
    const int steps = unroll_steps + 1;
    obs.assign(static_cast<size_t>(samples) * 27, 0.0);
    target_obs.assign(static_cast<size_t>(samples) * steps * 27, 0.0);
    actions.assign(static_cast<size_t>(samples) * unroll_steps, 0);
    policy_target.assign(static_cast<size_t>(samples) * steps * 9, 0.0);
    value_target.assign(static_cast<size_t>(samples) * steps, 0.0);
    policy_mask.assign(static_cast<size_t>(samples) * steps, 0.0);
    sim_mask.assign(static_cast<size_t>(samples) * steps, 0.0);
  }
};

}  // namespace mz
