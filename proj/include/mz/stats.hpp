#pragma once

#include <map>
#include <string>
#include <vector>

namespace mz::stats {

// Turns raw per-seed per-epoch audit rows into figure data: rolling averages,
// Student-t confidence bands, A/B differences and improvement factors.

// Per-seed scalar series over epochs; epochs must align across seeds.
struct SampleSeries {
  std::vector<int> epochs;
  std::vector<std::vector<double>> per_seed;  // [seed][epoch index]

  int num_seeds() const { return static_cast<int>(per_seed.size()); }
  int num_epochs() const { return static_cast<int>(epochs.size()); }
};

struct ConfidenceBand {
  std::vector<int> epochs;
  std::vector<double> mean;
  std::vector<double> half_width;
  double level = 0.99;  // 0.95 or 0.99
  int sample_size = 0;
};

// Trailing mean over min(window, available) entries; length preserved.
std::vector<double> rolling_average(const std::vector<double>& series, int window);

// Two-sided Student-t quantile for the given confidence level (0.95 or 0.99)
// and degrees of freedom, from an embedded standard table.
double t_quantile(double level, int degrees_of_freedom);

// mean +- t * sd / sqrt(n) per epoch; requires >= 2 seeds.
ConfidenceBand t_confidence_band(const SampleSeries& samples, double level);

// Paired: per-seed per-epoch differences (same seeds evaluated twice).
SampleSeries difference_paired(const SampleSeries& a, const SampleSeries& b);

// Unpaired: per-epoch difference of the arm means with combined variance;
// returns a band directly since per-seed pairing does not exist.
ConfidenceBand difference_unpaired(const SampleSeries& a, const SampleSeries& b, double level);

struct ImprovementFactor {
  double factor = 0.0;
  double uncertainty = 0.0;
  bool lower_bound_only = false;  // denominator interval spans zero
};

// Ratio of final means with first-order error propagation of the two
// half-widths. A denominator interval spanning zero degrades the result to a
// lower bound computed at the top of that interval.
ImprovementFactor improvement_factor(double mean_a, double half_width_a, double mean_b,
                                     double half_width_b);

// Stable column schema: epoch,arm,mean,ci_halfwidth,level,n.
void export_band_csv(const std::string& path,
                     const std::vector<std::pair<std::string, ConfidenceBand>>& arms);

// Convenience line plot of the exported bands; the CSV remains the contract.
void export_band_svg(const std::string& path,
                     const std::vector<std::pair<std::string, ConfidenceBand>>& arms,
                     const std::string& title);

// metrics.csv accessor: series of one metric for one experiment arm, ordered
// by (seed order given, epoch ascending).
SampleSeries load_metric_series(const std::string& metrics_csv_path, const std::string& experiment,
                                const std::string& metric);

}  // namespace mz::stats
