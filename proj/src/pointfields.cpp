#include "isde/pointfields.hpp"

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "isde/errors.hpp"

namespace isde {

namespace {

constexpr double kInvPi = 1.0 / std::numbers::pi;

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw PreconditionError(fmt::format("configuration CSV: cannot parse '{}' as a number", s));
  }
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void Configuration::validate() const {
  if (dim != 1 && dim != 2) throw PreconditionError(fmt::format("dim must be 1 or 2, got {}", dim));
  if (window_dim(window) != dim) throw PreconditionError("window shape does not match dim");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec2 p = points[i];
    if (!is_finite(p)) throw PreconditionError(fmt::format("point {} is not finite", i));
    if (dim == 1 && p.y != 0.0) throw PreconditionError(fmt::format("point {} has y != 0 in dim 1", i));
    if (!contains(window, p)) throw PreconditionError(fmt::format("point {} lies outside the window", i));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (points[i] == points[j]) {
        throw PreconditionError(fmt::format("points {} and {} coincide", i, j));
      }
    }
  }
}

double KernelModel::intensity() const { return kind == KernelKind::Ginibre ? kInvPi : 1.0; }

void SamplerParams::validate() const {
  if (n < 2) throw PreconditionError(fmt::format("n must be >= 2, got {}", n));
  if (beta != 1 && beta != 2 && beta != 4) {
    throw PreconditionError(fmt::format("beta must be in {{1, 2, 4}}, got {}", beta));
  }
  if (!(bulk_fraction > 0.0 && bulk_fraction <= 1.0)) {
    throw PreconditionError(fmt::format("bulk_fraction must lie in (0, 1], got {}", bulk_fraction));
  }
}

Configuration sample_ginibre(const SamplerParams& params) {
  params.validate();
  const auto n = static_cast<lapack_int>(params.n);
  std::mt19937_64 engine(params.seed);
  std::normal_distribution<double> half_normal(0.0, std::sqrt(0.5));

  // Upper Hessenberg form of a Ginibre matrix: entries on and above the
  // diagonal stay i.i.d. CN(0, 1); the k-th subdiagonal entry is the norm of
  // the n-1-k Gaussians a Householder reflector folds into it.
  std::vector<std::complex<double>> h(static_cast<std::size_t>(n) * n, {0.0, 0.0});
  for (lapack_int col = 0; col < n; ++col) {
    for (lapack_int row = 0; row <= col; ++row) {
      const double re = half_normal(engine);
      const double im = half_normal(engine);
      h[static_cast<std::size_t>(col) * n + row] = {re, im};
    }
    if (col + 1 < n) {
      std::gamma_distribution<double> gamma(static_cast<double>(n - 1 - col), 1.0);
      h[static_cast<std::size_t>(col) * n + col + 1] = std::sqrt(gamma(engine));
    }
  }

  std::vector<std::complex<double>> eig(n);
  const lapack_int info =
      LAPACKE_zhseqr(LAPACK_COL_MAJOR, 'E', 'N', n, 1, n, h.data(), n, eig.data(), nullptr, 1);
  if (info != 0) {
    throw NumericalError(fmt::format("Hessenberg QR failed for Ginibre sample (n={}, seed={}, info={})",
                                     params.n, params.seed, info));
  }

  Configuration out;
  out.dim = 2;
  out.points.reserve(eig.size());
  double max_norm = 0.0;
  for (const auto& z : eig) {
    out.points.push_back({z.real(), z.imag()});
    max_norm = std::max(max_norm, std::abs(z));
  }
  double radius = std::sqrt(static_cast<double>(params.n));
  if (max_norm >= radius) radius = std::nextafter(max_norm, INFINITY);
  out.window = Disk{radius};
  return out;
}

std::vector<double> sample_hermite_spectrum(const SamplerParams& params) {
  params.validate();
  const auto n = static_cast<lapack_int>(params.n);
  const double beta = params.beta;
  std::mt19937_64 engine(params.seed);
  std::normal_distribution<double> diag_dist(0.0, std::sqrt(2.0 / beta));

  std::vector<double> diag(n);
  std::vector<double> off(n - 1);
  for (lapack_int k = 0; k < n; ++k) diag[k] = diag_dist(engine);
  for (lapack_int k = 0; k + 1 < n; ++k) {
    std::chi_squared_distribution<double> chi2(beta * static_cast<double>(n - 1 - k));
    off[k] = std::sqrt(chi2(engine) / beta);
  }

  const lapack_int info = LAPACKE_dstev(LAPACK_COL_MAJOR, 'N', n, diag.data(), off.data(), nullptr, 1);
  if (info != 0) {
    throw NumericalError(fmt::format("tridiagonal eigensolve failed (n={}, beta={}, seed={}, info={})",
                                     params.n, params.beta, params.seed, info));
  }
  std::sort(diag.begin(), diag.end());
  return diag;
}

Configuration sample_hermite(const SamplerParams& params) {
  const auto spectrum = sample_hermite_spectrum(params);
  Configuration out;
  out.dim = 1;
  out.points.reserve(spectrum.size());
  for (double x : spectrum) out.points.push_back({x, 0.0});
  const double edge = 2.0 * std::sqrt(static_cast<double>(params.n));
  const double half = std::max(edge, std::max(-spectrum.front(), spectrum.back())) + 1.0;
  out.window = Interval{-half, half};
  return out;
}

Configuration unfold_bulk(std::span<const double> spectrum, double bulk_fraction) {
  if (spectrum.size() < 2) throw PreconditionError("unfold_bulk needs at least two eigenvalues");
  if (!(bulk_fraction > 0.0 && bulk_fraction <= 1.0)) {
    throw PreconditionError(fmt::format("bulk_fraction must lie in (0, 1], got {}", bulk_fraction));
  }
  const std::size_t n = spectrum.size();
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(bulk_fraction * static_cast<double>(n))), 2, n);
  const std::size_t first = (n - keep) / 2;
  const double scale = std::sqrt(static_cast<double>(n)) * kInvPi;

  Configuration out;
  out.dim = 1;
  out.points.reserve(keep);
  for (std::size_t k = first; k < first + keep; ++k) out.points.push_back({spectrum[k] * scale, 0.0});
  std::sort(out.points.begin(), out.points.end(), [](Vec2 a, Vec2 b) { return a.x < b.x; });
  const double half = 0.5 * static_cast<double>(keep);
  out.window = Interval{std::min(-half, out.points.front().x - 0.5),
                        std::max(half, out.points.back().x + 0.5)};
  return out;
}

Configuration sample_dyson_bulk(const SamplerParams& params) {
  const auto spectrum = sample_hermite_spectrum(params);
  return unfold_bulk(spectrum, params.bulk_fraction);
}

Configuration sample_poisson(double intensity, const Window& window, std::uint64_t seed) {
  if (!(intensity > 0.0) || !std::isfinite(intensity)) {
    throw PreconditionError(fmt::format("Poisson intensity must be positive, got {}", intensity));
  }
  Configuration out;
  out.dim = window_dim(window);
  out.window = window;
  const double mass = intensity * measure(window);
  if (mass <= 0.0) return out;

  std::mt19937_64 engine(seed);
  std::poisson_distribution<long long> count_dist(mass);
  const auto count = count_dist(engine);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.points.reserve(static_cast<std::size_t>(count));
  if (const auto* disk = std::get_if<Disk>(&window)) {
    for (long long k = 0; k < count; ++k) {
      const double r = disk->radius * std::sqrt(unit(engine));
      const double theta = 2.0 * std::numbers::pi * unit(engine);
      out.points.push_back({r * std::cos(theta), r * std::sin(theta)});
    }
  } else {
    const auto& iv = std::get<Interval>(window);
    for (long long k = 0; k < count; ++k) out.points.push_back({iv.lo + (iv.hi - iv.lo) * unit(engine), 0.0});
  }
  return out;
}

std::complex<double> kernel_eval(const KernelModel& model, Vec2 x, Vec2 y) {
  if (model.kind == KernelKind::Ginibre) {
    // z conj(w) - |z|^2/2 - |w|^2/2 has real part -|z-w|^2/2; evaluate it
    // directly instead of through the cancelling sum.
    const double re = -0.5 * norm2(x - y);
    const double im = x.y * y.x - x.x * y.y;
    return kInvPi * std::exp(std::complex<double>(re, im));
  }
  const double t = std::numbers::pi * (x.x - y.x);
  return t == 0.0 ? 1.0 : std::sin(t) / t;
}

double k_point_correlation(const KernelModel& model, std::span<const Vec2> points) {
  const auto k = static_cast<Eigen::Index>(points.size());
  if (k < 1 || k > 8) throw PreconditionError(fmt::format("k_point_correlation needs 1 <= k <= 8, got {}", k));
  Eigen::MatrixXcd m(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = kernel_eval(model, points[i], points[j]);
  }
  const double det = m.partialPivLu().determinant().real();
  if (det < -1e-12) {
    throw NumericalError(fmt::format("kernel determinant {} is negative beyond round-off", det));
  }
  return std::max(det, 0.0);
}

double kernel_pair_correlation(const KernelModel& model, double r) {
  const Vec2 pair[2] = {{0.0, 0.0}, {r, 0.0}};
  const double rho1 = model.intensity();
  return k_point_correlation(model, pair) / (rho1 * rho1);
}

void write_csv(std::ostream& out, const Configuration& config) {
  fmt::print(out, "dim,n\n{},{}\n", config.dim, config.points.size());
  for (const Vec2 p : config.points) {
    if (config.dim == 1) {
      fmt::print(out, "{:.17g}\n", p.x);
    } else {
      fmt::print(out, "{:.17g},{:.17g}\n", p.x, p.y);
    }
  }
}

Configuration read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "dim,n") throw PreconditionError("configuration CSV: missing 'dim,n' header");
  if (!std::getline(in, line)) throw PreconditionError("configuration CSV: missing dim,n values");
  const auto head = split_commas(line);
  if (head.size() != 2) throw PreconditionError("configuration CSV: malformed dim,n values");
  Configuration out;
  out.dim = static_cast<int>(parse_double(head[0]));
  const auto n = static_cast<std::size_t>(parse_double(head[1]));
  if (out.dim != 1 && out.dim != 2) throw PreconditionError("configuration CSV: dim must be 1 or 2");
  out.points.reserve(n);
  double extent = 0.0;
  while (out.points.size() < n && std::getline(in, line)) {
    const auto cols = split_commas(line);
    if (cols.size() != static_cast<std::size_t>(out.dim)) {
      throw PreconditionError(fmt::format("configuration CSV: row {} has {} columns", out.points.size(), cols.size()));
    }
    Vec2 p{parse_double(cols[0]), out.dim == 2 ? parse_double(cols[1]) : 0.0};
    extent = std::max(extent, out.dim == 2 ? norm(p) : std::abs(p.x));
    out.points.push_back(p);
  }
  if (out.points.size() != n) throw PreconditionError("configuration CSV: fewer rows than declared");
  if (out.dim == 2) {
    out.window = Disk{extent};
  } else {
    out.window = Interval{-extent, extent};
  }
  return out;
}

}  // namespace isde
