#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "isde/geometry.hpp"

namespace isde {

/// An unlabeled finite point set in R^dim together with the region it lives in.
struct Configuration {
  int dim = 2;
  std::vector<Vec2> points;
  Window window = Disk{0.0};

  std::size_t size() const { return points.size(); }

  /// Throws PreconditionError when a point is outside the window, two points
  /// coincide, or dim does not match the window. O(n^2).
  void validate() const;
};

enum class KernelKind { Ginibre, Sine };

/// Determinantal correlation kernel of one of the two limiting point fields.
struct KernelModel {
  KernelKind kind = KernelKind::Ginibre;

  static KernelModel ginibre() { return {KernelKind::Ginibre}; }
  static KernelModel sine() { return {KernelKind::Sine}; }

  /// Expected points per unit volume: 1/pi for Ginibre, 1 for sine.
  double intensity() const;
  int dim() const { return kind == KernelKind::Ginibre ? 2 : 1; }
};

struct SamplerParams {
  std::size_t n = 2;
  int beta = 2;
  std::uint64_t seed = 0;
  double bulk_fraction = 0.2;

  void validate() const;
};

/// Eigenvalues of an n x n matrix with i.i.d. standard complex Gaussian
/// entries, sampled through its Hessenberg reduction (which has the same
/// spectrum in law). Window is disk(sqrt(n)), enlarged if an edge eigenvalue
/// falls outside it.
Configuration sample_ginibre(const SamplerParams& params);

/// Full ascending spectrum of the Hermite beta-ensemble with joint density
/// proportional to exp(-beta/4 sum x^2) prod |x_i - x_j|^beta. The semicircle
/// support is [-2 sqrt(n), 2 sqrt(n)].
std::vector<double> sample_hermite_spectrum(const SamplerParams& params);

/// The same spectrum as a one-dimensional configuration in raw coordinates.
Configuration sample_hermite(const SamplerParams& params);

/// Keeps the central `bulk_fraction` of an ascending Hermite spectrum and
/// rescales by the semicircle density at 0, sqrt(n)/pi, so the result has
/// unit intensity.
Configuration unfold_bulk(std::span<const double> spectrum, double bulk_fraction);

/// sample_hermite_spectrum followed by unfold_bulk.
Configuration sample_dyson_bulk(const SamplerParams& params);

/// Homogeneous Poisson process of the given intensity on the window.
Configuration sample_poisson(double intensity, const Window& window, std::uint64_t seed);

std::complex<double> kernel_eval(const KernelModel& model, Vec2 x, Vec2 y);

/// rho_k(x_1..x_k) = det[K(x_i, x_j)] for 1 <= k <= 8. Round-off negativity
/// down to -1e-12 is clamped to zero; anything below throws NumericalError.
double k_point_correlation(const KernelModel& model, std::span<const Vec2> points);

/// Pair correlation g(r) = rho_2 / rho_1^2 of the kernel at separation r.
double kernel_pair_correlation(const KernelModel& model, double r);

/// CSV: a `dim,n` header line, the values line, then one row per point
/// (`x` or `x,y`) printed with 17 significant digits.
void write_csv(std::ostream& out, const Configuration& config);

/// Inverse of write_csv. The window is the tightest origin-centred disk or
/// interval containing the points.
Configuration read_csv(std::istream& in);

}  // namespace isde
