#include "mz/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mz::stats {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Two-sided Student-t quantiles. Rows are degrees of freedom; the last row
// stands in for the normal limit. For a df between rows the next lower row is
// used, which keeps the quantile conservative and monotone in df.
struct TRow {
  int df;
  double q95;
  double q99;
};

constexpr TRow kTTable[] = {
    {1, 12.7062, 63.6567}, {2, 4.3027, 9.9248},   {3, 3.1824, 5.8409},
    {4, 2.7764, 4.6041},   {5, 2.5706, 4.0321},   {6, 2.4469, 3.7074},
    {7, 2.3646, 3.4995},   {8, 2.3060, 3.3554},   {9, 2.2622, 3.2498},
    {10, 2.2281, 3.1693},  {11, 2.2010, 3.1058},  {12, 2.1788, 3.0545},
    {13, 2.1604, 3.0123},  {14, 2.1448, 2.9768},  {15, 2.1314, 2.9467},
    {16, 2.1199, 2.9208},  {17, 2.1098, 2.8982},  {18, 2.1009, 2.8784},
    {19, 2.0930, 2.8609},  {20, 2.0860, 2.8453},  {21, 2.0796, 2.8314},
    {22, 2.0739, 2.8188},  {23, 2.0687, 2.8073},  {24, 2.0639, 2.7969},
    {25, 2.0595, 2.7874},  {26, 2.0555, 2.7787},  {27, 2.0518, 2.7707},
    {28, 2.0484, 2.7633},  {29, 2.0452, 2.7564},  {30, 2.0423, 2.7500},
    {40, 2.0211, 2.7045},  {50, 2.0086, 2.6778},  {60, 2.0003, 2.6603},
    {80, 1.9901, 2.6387},  {100, 1.9840, 2.6259}, {120, 1.9799, 2.6174},
    {1000000, 1.9600, 2.5758},
};

}  // namespace

std::vector<double> rolling_average(const std::vector<double>& series, int window) {
  if (window < 1) throw std::invalid_argument("rolling window must be >= 1");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= static_cast<size_t>(window)) sum -= series[i - window];
    const size_t count = std::min<size_t>(window, i + 1);
    out[i] = sum / static_cast<double>(count);
  }
  return out;
}

double t_quantile(double level, int degrees_of_freedom) {
  if (degrees_of_freedom < 1) throw std::invalid_argument("t quantile needs df >= 1");
  const bool use99 = level >= 0.985;
  if (!use99 && std::abs(level - 0.95) > 1e-9 && std::abs(level - 0.99) > 1e-9) {
    throw std::invalid_argument("supported confidence levels are 0.95 and 0.99");
  }
  const TRow* chosen = &kTTable[0];
  for (const TRow& row : kTTable) {
    if (row.df <= degrees_of_freedom) chosen = &row;
  }
  return use99 ? chosen->q99 : chosen->q95;
}

ConfidenceBand t_confidence_band(const SampleSeries& samples, double level) {
  const int n = samples.num_seeds();
  if (n < 2) throw std::invalid_argument("confidence band needs at least 2 seeds");
  for (const auto& seed_series : samples.per_seed) {
    if (seed_series.size() != samples.epochs.size()) {
      throw std::invalid_argument("seed series are not epoch-aligned");
    }
  }
  const double t = t_quantile(level, n - 1);
  ConfidenceBand band;
  band.epochs = samples.epochs;
  band.level = level;
  band.sample_size = n;
  band.mean.resize(samples.num_epochs());
  band.half_width.resize(samples.num_epochs());
  for (int e = 0; e < samples.num_epochs(); ++e) {
    double mean = 0.0;
    for (int s = 0; s < n; ++s) mean += samples.per_seed[s][e];
    mean /= n;
    double var = 0.0;
    for (int s = 0; s < n; ++s) {
      const double d = samples.per_seed[s][e] - mean;
      var += d * d;
    }
    var /= (n - 1);
    band.mean[e] = mean;
    band.half_width[e] = t * std::sqrt(var / n);
  }
  return band;
}

SampleSeries difference_paired(const SampleSeries& a, const SampleSeries& b) {
  if (a.epochs != b.epochs || a.num_seeds() != b.num_seeds()) {
    throw std::invalid_argument("paired difference needs aligned epochs and seeds");
  }
  SampleSeries diff;
  diff.epochs = a.epochs;
  diff.per_seed.resize(a.num_seeds());
  for (int s = 0; s < a.num_seeds(); ++s) {
    diff.per_seed[s].resize(a.num_epochs());
    for (int e = 0; e < a.num_epochs(); ++e) {
      diff.per_seed[s][e] = a.per_seed[s][e] - b.per_seed[s][e];
    }
  }
  return diff;
}

ConfidenceBand difference_unpaired(const SampleSeries& a, const SampleSeries& b, double level) {
  if (a.epochs != b.epochs) throw std::invalid_argument("unpaired arms have misaligned epochs");
  const int na = a.num_seeds(), nb = b.num_seeds();
  if (na < 2 || nb < 2) throw std::invalid_argument("unpaired difference needs >= 2 seeds per arm");
  const double t = t_quantile(level, std::min(na, nb) - 1);
  ConfidenceBand band;
  band.epochs = a.epochs;
  band.level = level;
  band.sample_size = std::min(na, nb);
  band.mean.resize(a.num_epochs());
  band.half_width.resize(a.num_epochs());
  for (int e = 0; e < a.num_epochs(); ++e) {
    double ma = 0.0, mb = 0.0;
    for (int s = 0; s < na; ++s) ma += a.per_seed[s][e];
    for (int s = 0; s < nb; ++s) mb += b.per_seed[s][e];
    ma /= na;
    mb /= nb;
    double va = 0.0, vb = 0.0;
    for (int s = 0; s < na; ++s) va += (a.per_seed[s][e] - ma) * (a.per_seed[s][e] - ma);
    for (int s = 0; s < nb; ++s) vb += (b.per_seed[s][e] - mb) * (b.per_seed[s][e] - mb);
    va /= (na - 1);
    vb /= (nb - 1);
    band.mean[e] = ma - mb;
    band.half_width[e] = t * std::sqrt(va / na + vb / nb);
  }
  return band;
}

ImprovementFactor improvement_factor(double mean_a, double half_width_a, double mean_b,
                                     double half_width_b) {
  ImprovementFactor out;
  if (std::abs(mean_b) <= half_width_b) {
    // Denominator interval spans zero: only a lower bound is defensible.
    out.lower_bound_only = true;
    const double denom_top = std::abs(mean_b) + half_width_b;
    out.factor = denom_top > 0.0 ? mean_a / denom_top : 0.0;
    out.uncertainty = 0.0;
    return out;
  }
  out.factor = mean_a / mean_b;
  const double rel_a = half_width_a / std::abs(mean_a);
  const double rel_b = half_width_b / std::abs(mean_b);
  out.uncertainty = std::abs(out.factor) * std::sqrt(rel_a * rel_a + rel_b * rel_b);
  return out;
}

void export_band_csv(const std::string& path,
                     const std::vector<std::pair<std::string, ConfidenceBand>>& arms) {
  std::ostringstream out;
  out << "epoch,arm,mean,ci_halfwidth,level,n\n";
  for (const auto& [arm, band] : arms) {
    for (size_t e = 0; e < band.epochs.size(); ++e) {
      out << band.epochs[e] << ',' << arm << ',' << fmt(band.mean[e]) << ','
          << fmt(band.half_width[e]) << ',' << fmt(band.level) << ',' << band.sample_size << '\n';
    }
  }
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + path);
  file << out.str();
}

void export_band_svg(const std::string& path,
                     const std::vector<std::pair<std::string, ConfidenceBand>>& arms,
                     const std::string& title) {
  const int width = 720, height = 420, margin = 50;
  double lo = 0.0, hi = 1.0;
  int epoch_lo = 0, epoch_hi = 1;
  bool first = true;
  for (const auto& [arm, band] : arms) {
    for (size_t e = 0; e < band.epochs.size(); ++e) {
      const double low = band.mean[e] - band.half_width[e];
      const double high = band.mean[e] + band.half_width[e];
      if (first) {
        lo = low;
        hi = high;
        epoch_lo = epoch_hi = band.epochs[e];
        first = false;
      }
      lo = std::min(lo, low);
      hi = std::max(hi, high);
      epoch_lo = std::min(epoch_lo, band.epochs[e]);
      epoch_hi = std::max(epoch_hi, band.epochs[e]);
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  if (epoch_hi <= epoch_lo) epoch_hi = epoch_lo + 1;

  auto sx = [&](double epoch) {
    return margin + (epoch - epoch_lo) / double(epoch_hi - epoch_lo) * (width - 2 * margin);
  };
  auto sy = [&](double v) {
    return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin);
  };

  static const char* kColors[] = {"#2c7fb8", "#d95f02", "#1b9e77", "#7570b3"};
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "  <text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  int color = 0;
  for (const auto& [arm, band] : arms) {
    const char* stroke = kColors[color % 4];
    out << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (size_t e = 0; e < band.epochs.size(); ++e) {
      out << fmt(sx(band.epochs[e])) << ',' << fmt(sy(band.mean[e])) << ' ';
    }
    out << "\"/>\n";
    out << "  <text x=\"" << width - margin + 4 << "\" y=\"" << margin + 16 * color
        << "\" font-size=\"11\" fill=\"" << stroke << "\" text-anchor=\"end\">" << arm
        << "</text>\n";
    ++color;
  }
  out << "</svg>\n";
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + path);
  file << out.str();
}

SampleSeries load_metric_series(const std::string& metrics_csv_path, const std::string& experiment,
                                const std::string& metric) {
  std::ifstream in(metrics_csv_path);
  if (!in) throw std::runtime_error("cannot read " + metrics_csv_path);
  std::map<uint64_t, std::map<int, double>> by_seed;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string exp_s, seed_s, epoch_s, metric_s, value_s;
    std::getline(row, exp_s, ',');
    std::getline(row, seed_s, ',');
    std::getline(row, epoch_s, ',');
    std::getline(row, metric_s, ',');
    std::getline(row, value_s, ',');
    if (exp_s != experiment || metric_s != metric) continue;
    by_seed[std::stoull(seed_s)][std::stoi(epoch_s)] = std::stod(value_s);
  }
  if (by_seed.empty()) {
    throw std::runtime_error("no rows for experiment '" + experiment + "', metric '" + metric +
                             "' in " + metrics_csv_path);
  }
  // Epoch set must align across seeds.
  SampleSeries series;
  const auto& reference = by_seed.begin()->second;
  for (const auto& [epoch, value] : reference) series.epochs.push_back(epoch);
  for (const auto& [seed, rows] : by_seed) {
    if (rows.size() != reference.size()) {
      throw std::runtime_error("metric series misaligned across seeds in " + metrics_csv_path);
    }
    std::vector<double> values;
    for (const auto& [epoch, value] : rows) values.push_back(value);
    series.per_seed.push_back(std::move(values));
  }
  return series;
}

}  // namespace mz::stats
