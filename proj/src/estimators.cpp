#include "isde/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "isde/compensated.hpp"
#include "isde/errors.hpp"

namespace isde {

namespace {

struct PairCounts {
  std::vector<std::uint64_t> pairs;
  double norm_per_bin_unit = 0.0;  // intensity^2 |W| summed over configurations
};

double shell_measure(int dim, double lo, double hi) {
  return dim == 2 ? std::numbers::pi * (hi * hi - lo * lo) : 2.0 * (hi - lo);
}

// Bin index of d, or -1 when outside [edges.front(), edges.back()).
long bin_of(const std::vector<double>& edges, double d) {
  if (d < edges.front() || d >= edges.back()) return -1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), d);
  return static_cast<long>(it - edges.begin()) - 1;
}

void count_pairs(const Configuration& c, const Window& sub_window, const Bins& bins, std::vector<std::uint64_t>& pairs) {
  const double max_d = bins.edges.back();
  const double max_d2 = max_d * max_d;
  const auto& pts = c.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!contains(sub_window, pts[i])) continue;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      const double d2 = norm2(pts[i] - pts[j]);
      if (d2 >= max_d2) continue;
      const long b = bin_of(bins.edges, std::sqrt(d2));
      if (b >= 0) ++pairs[static_cast<std::size_t>(b)];
    }
  }
}

void check_correlation_inputs(std::span<const Configuration> configs, const Window& sub_window, const Bins& bins,
                              double intensity) {
  bins.validate();
  if (!(intensity > 0.0)) throw PreconditionError(fmt::format("intensity must be positive, got {}", intensity));
  if (!(measure(sub_window) > 0.0)) throw PreconditionError("sub-window has zero measure");
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const auto& c = configs[k];
    if (window_dim(c.window) != window_dim(sub_window) || c.dim != window_dim(sub_window)) {
      throw PreconditionError(fmt::format("configuration {} does not match the sub-window dimension", k));
    }
    if (!interior_with_margin(sub_window, c.window, bins.edges.back())) {
      throw PreconditionError(fmt::format(
          "sub-window is not interior to configuration {}'s window with margin >= max bin distance {}", k,
          bins.edges.back()));
    }
  }
}

CorrelationEstimate finish(const Bins& bins, const Window& sub_window, double intensity, std::size_t pooled,
                           const std::vector<std::uint64_t>& pairs) {
  const int dim = window_dim(sub_window);
  const double base = intensity * intensity * measure(sub_window) * static_cast<double>(pooled);
  CorrelationEstimate est;
  est.edges = bins.edges;
  est.pairs = pairs;
  est.sub_window = sub_window;
  est.pooled = pooled;
  est.intensity = intensity;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const double norm = base * shell_measure(dim, bins.edges[b], bins.edges[b + 1]);
    const double count = static_cast<double>(pairs[b]);
    est.g_hat.push_back(norm > 0.0 ? count / norm : 0.0);
    est.std_error.push_back(norm > 0.0 ? std::sqrt(count) / norm : 0.0);
  }
  return est;
}

std::pair<double, double> mean_and_se(const std::vector<double>& xs) {
  NeumaierSum sum;
  for (double x : xs) sum.add(x);
  const double mean = sum.value() / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  NeumaierSum sq;
  for (double x : xs) sq.add((x - mean) * (x - mean));
  const double var = sq.value() / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace

Bins Bins::uniform(double lo, double hi, std::size_t count) {
  if (count == 0 || !(hi > lo)) throw PreconditionError("uniform bins need count > 0 and hi > lo");
  Bins b;
  b.edges.reserve(count + 1);
  for (std::size_t k = 0; k <= count; ++k) {
    b.edges.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count));
  }
  return b;
}

void Bins::validate() const {
  if (edges.size() < 2) throw PreconditionError("bins need at least two edges");
  if (!(edges.front() >= 0.0)) throw PreconditionError("bin edges must be nonnegative");
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (!(edges[k] > edges[k - 1])) throw PreconditionError("bin edges must be strictly increasing");
  }
}

CorrelationEstimate pair_correlation(std::span<const Configuration> configs, const Window& sub_window,
                                     const Bins& bins, double intensity) {
  if (configs.empty()) throw PreconditionError("pair_correlation needs at least one configuration");
  check_correlation_inputs(configs, sub_window, bins, intensity);
  std::vector<std::uint64_t> pairs(bins.size(), 0);
  for (const auto& c : configs) count_pairs(c, sub_window, bins, pairs);
  return finish(bins, sub_window, intensity, configs.size(), pairs);
}

CorrelationEstimate pair_correlation_grouped(std::span<const std::vector<Configuration>> groups,
                                             const Window& sub_window, const Bins& bins, double intensity) {
  std::vector<CorrelationEstimate> per_group;
  std::vector<std::uint64_t> pairs(bins.size(), 0);
  std::size_t pooled = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw PreconditionError("pair_correlation_grouped: empty group");
    per_group.push_back(pair_correlation(g, sub_window, bins, intensity));
    for (std::size_t b = 0; b < pairs.size(); ++b) pairs[b] += per_group.back().pairs[b];
    pooled += g.size();
  }
  if (per_group.empty()) throw PreconditionError("pair_correlation_grouped needs at least one group");
  auto est = finish(bins, sub_window, intensity, pooled, pairs);
  if (per_group.size() >= 2) {
    for (std::size_t b = 0; b < bins.size(); ++b) {
      std::vector<double> gs;
      for (const auto& e : per_group) gs.push_back(e.g_hat[b]);
      est.std_error[b] = mean_and_se(gs).second;
    }
  }
  return est;
}

std::vector<double> closed_form_pair_correlation(const KernelModel& model, const Bins& bins) {
  bins.validate();
  using Rule = boost::math::quadrature::gauss<double, 20>;
  const int dim = model.dim();
  std::vector<double> out;
  out.reserve(bins.size());
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const double lo = bins.edges[b];
    const double hi = bins.edges[b + 1];
    if (dim == 2) {
      const double integral =
          Rule::integrate([&](double r) { return kernel_pair_correlation(model, r) * 2.0 * std::numbers::pi * r; }, lo, hi);
      out.push_back(integral / shell_measure(2, lo, hi));
    } else {
      const double integral = Rule::integrate([&](double r) { return kernel_pair_correlation(model, r); }, lo, hi);
      out.push_back(integral / (hi - lo));
    }
  }
  return out;
}

void write_correlation_csv(std::ostream& out, const CorrelationEstimate& est) {
  fmt::print(out, "r_lo,r_hi,g_hat,pairs,stderr\n");
  for (std::size_t b = 0; b < est.g_hat.size(); ++b) {
    fmt::print(out, "{:.17g},{:.17g},{:.17g},{},{:.17g}\n", est.edges[b], est.edges[b + 1], est.g_hat[b], est.pairs[b],
               est.std_error[b]);
  }
}

NumberVarianceCurve number_variance(std::span<const Configuration> configs, std::span<const double> radii) {
  if (configs.size() < 2) throw PreconditionError(fmt::format("number_variance needs >= 2 configurations, got {}", configs.size()));
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0) || (k > 0 && !(radii[k] > radii[k - 1]))) {
      throw PreconditionError("number_variance radii must be positive and strictly increasing");
    }
  }
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const auto& cfg = configs[c];
    for (const double r : radii) {
      const Window probe = cfg.dim == 2 ? Window{Disk{r}} : Window{Interval{-r, r}};
      if (!interior_with_margin(probe, cfg.window, 0.0)) {
        throw PreconditionError(fmt::format("radius {} exceeds the window of configuration {}", r, c));
      }
    }
  }

  NumberVarianceCurve curve;
  curve.seeds = configs.size();
  for (const double r : radii) {
    std::vector<double> counts;
    counts.reserve(configs.size());
    for (const auto& cfg : configs) {
      const Window probe = cfg.dim == 2 ? Window{Disk{r}} : Window{Interval{-r, r}};
      counts.push_back(static_cast<double>(
          std::count_if(cfg.points.begin(), cfg.points.end(), [&](Vec2 p) { return contains(probe, p); })));
    }
    const auto [mean, se] = mean_and_se(counts);
    const double n = static_cast<double>(counts.size());
    curve.radii.push_back(r);
    curve.mean.push_back(mean);
    curve.variance.push_back(se * se * n);
  }
  return curve;
}

SpacingHistogram pooled_spacing_distribution(std::span<const Configuration> configs, const Bins& bins) {
  bins.validate();
  SpacingHistogram h;
  h.edges = bins.edges;
  h.counts.assign(bins.size(), 0);
  NeumaierSum total;
  for (const auto& c : configs) {
    if (c.dim != 1) throw PreconditionError("spacing_distribution needs a one-dimensional configuration");
    if (c.points.size() < 10) {
      throw PreconditionError(fmt::format("spacing_distribution needs >= 10 points, got {}", c.points.size()));
    }
    std::vector<double> xs;
    xs.reserve(c.points.size());
    for (const Vec2 p : c.points) xs.push_back(p.x);
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
      const double gap = xs[k + 1] - xs[k];
      total.add(gap);
      ++h.gaps;
      const long b = bin_of(bins.edges, gap);
      if (b >= 0) {
        ++h.counts[static_cast<std::size_t>(b)];
      } else {
        ++h.overflow;
      }
    }
  }
  if (h.gaps == 0) throw PreconditionError("spacing_distribution: no gaps");
  h.mean_gap = total.value() / static_cast<double>(h.gaps);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    h.density.push_back(static_cast<double>(h.counts[b]) /
                        (static_cast<double>(h.gaps) * (bins.edges[b + 1] - bins.edges[b])));
  }
  return h;
}

SpacingHistogram spacing_distribution(const Configuration& config, const Bins& bins) {
  return pooled_spacing_distribution(std::span<const Configuration>(&config, 1), bins);
}

double mass_below(const SpacingHistogram& hist, double threshold) {
  const auto it = std::find(hist.edges.begin(), hist.edges.end(), threshold);
  if (it == hist.edges.end()) throw PreconditionError(fmt::format("threshold {} is not a bin edge", threshold));
  const auto upto = static_cast<std::size_t>(it - hist.edges.begin());
  std::uint64_t below = 0;
  for (std::size_t b = 0; b < upto; ++b) below += hist.counts[b];
  if (hist.edges.front() > 0.0) throw PreconditionError("mass_below needs bins starting at 0");
  return static_cast<double>(below) / static_cast<double>(hist.gaps);
}

HistogramBand histogram_band(std::span<const SpacingHistogram> hists) {
  if (hists.empty()) throw PreconditionError("histogram_band needs at least one histogram");
  HistogramBand band;
  band.edges = hists.front().edges;
  band.samples = hists.size();
  for (const auto& h : hists) {
    if (h.edges != band.edges) throw PreconditionError("histogram_band: histograms use different bins");
  }
  for (std::size_t b = 0; b + 1 < band.edges.size(); ++b) {
    std::vector<double> ds;
    for (const auto& h : hists) ds.push_back(h.density[b]);
    const auto [mean, se] = mean_and_se(ds);
    band.mean.push_back(mean);
    band.std_error.push_back(se);
  }
  return band;
}

InvarianceReport invariance_report(std::span<const TrajectoryRecord> trajectories, const KernelModel& model,
                                   const InvarianceOptions& options) {
  if (trajectories.empty()) throw PreconditionError("invariance_report needs at least one trajectory");
  const std::size_t snaps = trajectories.front().snapshots.size();
  if (snaps == 0) throw PreconditionError("invariance_report: trajectory has no snapshots");
  for (const auto& t : trajectories) {
    if (t.snapshots.size() != snaps) throw PreconditionError("invariance_report: trajectories differ in snapshot count");
  }
  if (!(options.early_fraction > 0.0 && options.early_fraction <= 1.0) ||
      !(options.late_fraction > 0.0 && options.late_fraction <= 1.0)) {
    throw PreconditionError("early/late fractions must lie in (0, 1]");
  }

  const auto early_n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(options.early_fraction * static_cast<double>(snaps))));
  const auto late_n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(options.late_fraction * static_cast<double>(snaps))));

  std::vector<std::vector<Configuration>> early;
  std::vector<std::vector<Configuration>> late;
  for (const auto& t : trajectories) {
    auto configs = to_unlabeled(t);
    if (options.preprocess) {
      for (auto& c : configs) c = options.preprocess(c);
    }
    early.emplace_back(configs.begin(), configs.begin() + static_cast<std::ptrdiff_t>(early_n));
    late.emplace_back(configs.end() - static_cast<std::ptrdiff_t>(late_n), configs.end());
  }

  const auto g_early = pair_correlation_grouped(early, options.sub_window, options.bins, options.intensity);
  const auto g_late = pair_correlation_grouped(late, options.sub_window, options.bins, options.intensity);
  const auto g_closed = closed_form_pair_correlation(model, options.bins);

  InvarianceReport rep;
  rep.seeds = trajectories.size();
  rep.snapshots_per_seed = snaps;
  rep.early_snapshots = early_n;
  rep.late_snapshots = late_n;
  rep.tolerance = options.tolerance;
  rep.z = options.z;
  rep.pass_early_late = true;
  for (std::size_t b = 0; b < options.bins.size(); ++b) {
    InvarianceBin bin;
    bin.r_lo = options.bins.edges[b];
    bin.r_hi = options.bins.edges[b + 1];
    bin.g_closed = g_closed[b];
    bin.g_early = g_early.g_hat[b];
    bin.se_early = g_early.std_error[b];
    bin.g_late = g_late.g_hat[b];
    bin.se_late = g_late.std_error[b];
    bin.dev_late_closed = std::abs(bin.g_late - bin.g_closed);
    bin.dev_early_closed = std::abs(bin.g_early - bin.g_closed);
    bin.dev_early_late = std::abs(bin.g_early - bin.g_late);
    const double se = std::hypot(bin.se_early, bin.se_late);
    if (se > 0.0) {
      bin.z_early_late = bin.dev_early_late / se;
      if (bin.z_early_late > options.z) rep.pass_early_late = false;
    } else if (bin.dev_early_late > 0.0) {
      bin.z_early_late = INFINITY;
      rep.pass_early_late = false;
    }
    rep.max_dev_late_closed = std::max(rep.max_dev_late_closed, bin.dev_late_closed);
    rep.max_dev_early_closed = std::max(rep.max_dev_early_closed, bin.dev_early_closed);
    rep.max_z_early_late = std::max(rep.max_z_early_late, bin.z_early_late);
    rep.bins.push_back(bin);
  }
  rep.pass_late_closed = rep.max_dev_late_closed < options.tolerance;
  rep.pass = rep.pass_late_closed && rep.pass_early_late;
  return rep;
}

InvarianceReport invariance_report(const TrajectoryRecord& trajectory, const KernelModel& model,
                                   const InvarianceOptions& options) {
  return invariance_report(std::span<const TrajectoryRecord>(&trajectory, 1), model, options);
}

std::string InvarianceReport::to_text() const {
  std::string s = fmt::format(
      "invariance report: {} seed(s), {} snapshots each, early pool {} / late pool {} snapshots\n", seeds,
      snapshots_per_seed, early_snapshots, late_snapshots);
  s += fmt::format("  late vs closed form : max |dev| = {:.6f} (tolerance {:.6f})  {}\n", max_dev_late_closed, tolerance,
                   pass_late_closed ? "PASS" : "FAIL");
  s += fmt::format("  early vs late       : max z = {:.3f} (limit {:.3f})  {}\n", max_z_early_late, z,
                   pass_early_late ? "PASS" : "FAIL");
  s += fmt::format("  early vs closed form: max |dev| = {:.6f} (transient indicator)\n", max_dev_early_closed);
  s += "  r_lo     r_hi     g_closed  g_early   g_late    dev_late  z_early_late\n";
  for (const auto& b : bins) {
    s += fmt::format("  {:<8.4f} {:<8.4f} {:<9.5f} {:<9.5f} {:<9.5f} {:<9.5f} {:.3f}\n", b.r_lo, b.r_hi, b.g_closed,
                     b.g_early, b.g_late, b.dev_late_closed, b.z_early_late);
  }
  s += fmt::format("overall: {}\n", pass ? "PASS" : "FAIL");
  return s;
}

std::string InvarianceReport::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  j["snapshots_per_seed"] = snapshots_per_seed;
  j["early_snapshots"] = early_snapshots;
  j["late_snapshots"] = late_snapshots;
  j["tolerance"] = tolerance;
  j["z"] = z;
  j["max_dev_late_closed"] = max_dev_late_closed;
  j["max_dev_early_closed"] = max_dev_early_closed;
  j["max_z_early_late"] = std::isfinite(max_z_early_late) ? nlohmann::json(max_z_early_late) : nlohmann::json();
  j["pass_late_closed"] = pass_late_closed;
  j["pass_early_late"] = pass_early_late;
  j["pass"] = pass;
  auto& arr = j["bins"] = nlohmann::json::array();
  for (const auto& b : bins) {
    arr.push_back({{"r_lo", b.r_lo},
                   {"r_hi", b.r_hi},
                   {"g_closed", b.g_closed},
                   {"g_early", b.g_early},
                   {"se_early", b.se_early},
                   {"g_late", b.g_late},
                   {"se_late", b.se_late},
                   {"dev_late_closed", b.dev_late_closed},
                   {"dev_early_closed", b.dev_early_closed},
                   {"dev_early_late", b.dev_early_late},
                   {"z_early_late", std::isfinite(b.z_early_late) ? nlohmann::json(b.z_early_late) : nlohmann::json()}});
  }
  return j.dump(2);
}

}  // namespace isde
