#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "isde/dynamics.hpp"
#include "isde/geometry.hpp"
#include "isde/pointfields.hpp"

namespace isde {

/// Strictly increasing bin edges on [0, inf).
struct Bins {
  std::vector<double> edges;

  static Bins uniform(double lo, double hi, std::size_t count);
  std::size_t size() const { return edges.empty() ? 0 : edges.size() - 1; }
  void validate() const;
};

struct CorrelationEstimate {
  std::vector<double> edges;
  std::vector<double> g_hat;
  std::vector<std::uint64_t> pairs;
  std::vector<double> std_error;
  Window sub_window = Disk{0.0};
  std::size_t pooled = 0;
  double intensity = 0.0;
};

/// Minus-sampling estimator of the pair correlation: ordered pairs (x, y)
/// with x in sub_window, |x - y| in a bin, divided by
/// intensity^2 |sub_window| |shell| per configuration (shell = annulus in 2D,
/// two intervals in 1D). The sub-window must sit inside every configuration's
/// window with margin >= the last bin edge. std_error is sqrt(pairs)/norm.
CorrelationEstimate pair_correlation(std::span<const Configuration> configs, const Window& sub_window,
                                     const Bins& bins, double intensity);

/// Same estimate pooled over all groups; std_error is the between-group
/// standard error of the per-group estimates when there are >= 2 groups.
/// Use one group per independent seed when snapshots within a seed are
/// correlated.
CorrelationEstimate pair_correlation_grouped(std::span<const std::vector<Configuration>> groups,
                                             const Window& sub_window, const Bins& bins, double intensity);

/// Shell-averaged closed-form pair correlation rho_2/rho_1^2 of the kernel,
/// one value per bin, integrated numerically from k_point_correlation.
std::vector<double> closed_form_pair_correlation(const KernelModel& model, const Bins& bins);

/// CSV `r_lo,r_hi,g_hat,pairs,stderr`.
void write_correlation_csv(std::ostream& out, const CorrelationEstimate& est);

struct NumberVarianceCurve {
  std::vector<double> radii;
  std::vector<double> mean;
  std::vector<double> variance;
  std::size_t seeds = 0;
};

/// Sample mean and variance of the number of points in the origin-centred
/// disk (or interval [-R, R]) across configurations.
NumberVarianceCurve number_variance(std::span<const Configuration> configs, std::span<const double> radii);

struct SpacingHistogram {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;
  std::vector<double> density;
  std::uint64_t gaps = 0;
  std::uint64_t overflow = 0;
  double mean_gap = 0.0;
};

/// Histogram of consecutive gaps of a one-dimensional configuration.
/// density is normalised by the total gap count, overflow included.
SpacingHistogram spacing_distribution(const Configuration& config, const Bins& bins = Bins::uniform(0.0, 4.0, 40));

/// Gaps of several configurations pooled into one histogram.
SpacingHistogram pooled_spacing_distribution(std::span<const Configuration> configs,
                                             const Bins& bins = Bins::uniform(0.0, 4.0, 40));

/// Fraction of gaps below `threshold`, which must be one of the bin edges.
double mass_below(const SpacingHistogram& hist, double threshold);

/// Mean density per bin across independent histograms with its standard error.
struct HistogramBand {
  std::vector<double> edges;
  std::vector<double> mean;
  std::vector<double> std_error;
  std::size_t samples = 0;
};

HistogramBand histogram_band(std::span<const SpacingHistogram> hists);

struct InvarianceOptions {
  Window sub_window = Disk{0.0};
  Bins bins = Bins::uniform(0.0, 4.0, 40);
  double intensity = 0.0;
  /// Maximum |g_late - g_closed| per bin.
  double tolerance = 0.05;
  /// Early vs late agreement in units of the pooled standard error.
  double z = 3.0;
  double early_fraction = 0.10;
  double late_fraction = 0.25;
  /// Applied to every snapshot before estimation (e.g. bulk unfolding).
  std::function<Configuration(const Configuration&)> preprocess;
};

struct InvarianceBin {
  double r_lo = 0.0;
  double r_hi = 0.0;
  double g_closed = 0.0;
  double g_early = 0.0;
  double se_early = 0.0;
  double g_late = 0.0;
  double se_late = 0.0;
  double dev_late_closed = 0.0;
  double dev_early_closed = 0.0;
  double dev_early_late = 0.0;
  double z_early_late = 0.0;
};

struct InvarianceReport {
  std::vector<InvarianceBin> bins;
  std::size_t seeds = 0;
  std::size_t snapshots_per_seed = 0;
  std::size_t early_snapshots = 0;
  std::size_t late_snapshots = 0;
  double tolerance = 0.0;
  double z = 0.0;
  double max_dev_late_closed = 0.0;
  double max_dev_early_closed = 0.0;
  double max_z_early_late = 0.0;
  bool pass_late_closed = false;
  bool pass_early_late = false;
  bool pass = false;

  std::string to_text() const;
  std::string to_json() const;
};

/// Compares the early (first early_fraction) and late (last late_fraction)
/// snapshot pools of each trajectory with each other and with the model's
/// closed-form pair correlation. One trajectory per independent seed.
InvarianceReport invariance_report(std::span<const TrajectoryRecord> trajectories, const KernelModel& model,
                                   const InvarianceOptions& options);
InvarianceReport invariance_report(const TrajectoryRecord& trajectory, const KernelModel& model,
                                   const InvarianceOptions& options);

}  // namespace isde
