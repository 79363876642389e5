#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "isde/errors.hpp"
#include "isde/estimators.hpp"
#include "isde/pointfields.hpp"

using namespace isde;

namespace {

constexpr double kPi = std::numbers::pi;

std::size_t count_in_disk(const Configuration& c, double r) {
  return static_cast<std::size_t>(
      std::count_if(c.points.begin(), c.points.end(), [&](Vec2 p) { return norm2(p) < r * r; }));
}

// Kostlan: the squared moduli of finite Ginibre eigenvalues are independent
// Gamma(k, 1), k = 1..n. Expected count in disk(R) = sum_k P(Gamma(k) < R^2).
double kostlan_mean_count(std::size_t n, double r) {
  double s = 0.0;
  for (std::size_t k = 1; k <= n; ++k) s += boost::math::gamma_p(static_cast<double>(k), r * r);
  return s;
}

Vec2 random_point(std::mt19937_64& g, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(g), u(g)};
}

}  // namespace

TEST_CASE("ginibre sampler returns n points and is deterministic") {
  SamplerParams p{2, 2, 17, 0.2};
  const auto a = sample_ginibre(p);
  const auto b = sample_ginibre(p);
  CHECK(a.size() == 2);
  CHECK(a.dim == 2);
  CHECK(a.points == b.points);
  p.seed = 18;
  CHECK(sample_ginibre(p).points != a.points);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("ginibre n=2 count in the unit disk matches the finite-n density") {
  // integral over |z|<1 of (1/pi) e^{-|z|^2}(1 + |z|^2) = 2 - 3/e.
  const double expected = 2.0 - 3.0 / std::numbers::e;
  CHECK(kostlan_mean_count(2, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  double sum = 0.0;
  double sum2 = 0.0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) {
    const double c = static_cast<double>(count_in_disk(sample_ginibre({2, 2, static_cast<std::uint64_t>(s), 0.2}), 1.0));
    sum += c;
    sum2 += c * c;
  }
  const double mean = sum / seeds;
  const double se = std::sqrt((sum2 / seeds - mean * mean) / seeds);
  CHECK(std::abs(mean - expected) < 4.0 * se);
}

TEST_CASE("ginibre count in the unit disk approaches pi * (1/pi) = 1 as n grows") {
  const std::size_t n = 60;
  const double expected = kostlan_mean_count(n, 1.0);
  CHECK(expected == doctest::Approx(1.0).epsilon(1e-9));
  double sum = 0.0;
  double sum2 = 0.0;
  const int seeds = 2000;
  for (int s = 0; s < seeds; ++s) {
    const double c = static_cast<double>(count_in_disk(sample_ginibre({n, 2, static_cast<std::uint64_t>(s), 0.2}), 1.0));
    sum += c;
    sum2 += c * c;
  }
  const double mean = sum / seeds;
  const double se = std::sqrt((sum2 / seeds - mean * mean) / seeds);
  CHECK(std::abs(mean - expected) < 4.0 * se);
}

TEST_CASE("ginibre sum of squared moduli has mean n(n+1)/2") {
  const std::size_t n = 30;
  const int seeds = 2000;
  double sum = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const auto c = sample_ginibre({n, 2, static_cast<std::uint64_t>(s), 0.2});
    for (const Vec2 p : c.points) sum += norm2(p);
  }
  // Var(sum Gamma(k)) = sum k = n(n+1)/2, so SE = sqrt(n(n+1)/2 / seeds).
  const double expected = n * (n + 1) / 2.0;
  const double se = std::sqrt(expected / seeds);
  CHECK(std::abs(sum / seeds - expected) < 4.0 * se);
}

TEST_CASE("ginibre number variance is far below the Poisson value at matched intensity") {
  // R = 8 sits deep inside disk(sqrt(400)) = disk(20).
  const std::size_t n = 400;
  const double r = 8.0;
  std::vector<Configuration> gin;
  std::vector<Configuration> poi;
  for (std::uint64_t s = 0; s < 100; ++s) {
    gin.push_back(sample_ginibre({n, 2, s, 0.2}));
    poi.push_back(sample_poisson(1.0 / kPi, Disk{std::sqrt(static_cast<double>(n))}, 1000 + s));
  }
  const double radii[] = {r};
  const auto vg = number_variance(gin, radii);
  const auto vp = number_variance(poi, radii);
  CHECK(vg.mean[0] == doctest::Approx(r * r).epsilon(0.05));
  CHECK(vp.mean[0] == doctest::Approx(r * r).epsilon(0.05));
  CHECK(vg.variance[0] / vp.variance[0] < 0.5);
}

TEST_CASE("dyson bulk sampler") {
  SUBCASE("unit mean spacing after unfolding") {
    double mean_spacing = 0.0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
      const auto c = sample_dyson_bulk({400, 2, static_cast<std::uint64_t>(s), 0.2});
      CHECK(c.size() == 80);
      mean_spacing += (c.points.back().x - c.points.front().x) / static_cast<double>(c.size() - 1);
    }
    mean_spacing /= seeds;
    CHECK(std::abs(mean_spacing - 1.0) < 0.05);
  }
  SUBCASE("all beta values unfold to unit intensity") {
    for (int beta : {1, 2, 4}) {
      double mean_spacing = 0.0;
      for (int s = 0; s < 40; ++s) {
        const auto c = sample_dyson_bulk({400, beta, static_cast<std::uint64_t>(s), 0.2});
        mean_spacing += (c.points.back().x - c.points.front().x) / static_cast<double>(c.size() - 1);
      }
      CHECK(std::abs(mean_spacing / 40 - 1.0) < 0.05);
    }
  }
  SUBCASE("raw spectrum follows the semicircle of radius 2 sqrt(n)") {
    // Second moment of the semicircle on [-2a, 2a] is a^2 = n per eigenvalue.
    const std::size_t n = 200;
    double m2 = 0.0;
    for (int s = 0; s < 50; ++s) {
      for (double x : sample_hermite_spectrum({n, 2, static_cast<std::uint64_t>(s), 0.2})) m2 += x * x;
    }
    // E tr H^2 = n (diagonal) + n(n-1) (off-diagonal pairs) = n^2 for beta = 2.
    CHECK(m2 / 50 / static_cast<double>(n * n) == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("deterministic") {
    const SamplerParams p{100, 4, 5, 0.5};
    CHECK(sample_dyson_bulk(p).points == sample_dyson_bulk(p).points);
  }
  SUBCASE("beta = 2 pair correlation matches the sine kernel") {
    std::vector<std::vector<Configuration>> groups;
    for (std::uint64_t s = 0; s < 400; ++s) groups.push_back({sample_dyson_bulk({400, 2, s, 0.2})});
    const Bins bins = Bins::uniform(0.0, 2.0, 20);
    const auto est = pair_correlation_grouped(groups, Interval{-30.0, 30.0}, bins, 1.0);
    const auto closed = closed_form_pair_correlation(KernelModel::sine(), bins);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      INFO("bin " << b << " g_hat " << est.g_hat[b] << " closed " << closed[b] << " se " << est.std_error[b]);
      CHECK(std::abs(est.g_hat[b] - closed[b]) < 4.0 * est.std_error[b] + 0.02);
    }
  }
  SUBCASE("invalid beta") {
    CHECK_THROWS_AS(sample_dyson_bulk({100, 3, 0, 0.2}), PreconditionError);
    CHECK_THROWS_AS(sample_ginibre({1, 2, 0, 0.2}), PreconditionError);
    CHECK_THROWS_AS(sample_dyson_bulk({100, 2, 0, 0.0}), PreconditionError);
  }
}

TEST_CASE("poisson sampler") {
  SUBCASE("mean count is intensity times area") {
    double sum = 0.0;
    const int seeds = 1000;
    for (int s = 0; s < seeds; ++s) sum += static_cast<double>(sample_poisson(1.0 / kPi, Disk{10.0}, s).size());
    // Poisson(100): SE of the mean over 1000 seeds is sqrt(100/1000).
    CHECK(std::abs(sum / seeds - 100.0) < 4.0 * std::sqrt(0.1));
  }
  SUBCASE("zero-measure window gives the empty configuration") {
    CHECK(sample_poisson(1.0, Disk{0.0}, 1).size() == 0);
    CHECK(sample_poisson(1.0, Interval{2.0, 2.0}, 1).size() == 0);
  }
  SUBCASE("pair correlation is flat") {
    std::vector<std::vector<Configuration>> groups;
    for (std::uint64_t s = 0; s < 200; ++s) groups.push_back({sample_poisson(1.0 / kPi, Disk{20.0}, s)});
    const auto est = pair_correlation_grouped(groups, Disk{14.0}, Bins::uniform(0.0, 4.0, 10), 1.0 / kPi);
    for (std::size_t b = 0; b < est.g_hat.size(); ++b) {
      INFO("bin " << b);
      CHECK(std::abs(est.g_hat[b] - 1.0) < 3.0 * est.std_error[b]);
    }
  }
  SUBCASE("points lie inside the window") {
    CHECK_NOTHROW(sample_poisson(1.0, Interval{-5.0, 5.0}, 3).validate());
    CHECK_NOTHROW(sample_poisson(0.5, Disk{6.0}, 3).validate());
    CHECK_THROWS_AS(sample_poisson(0.0, Disk{1.0}, 3), PreconditionError);
  }
}

TEST_CASE("kernel evaluation") {
  const auto gin = KernelModel::ginibre();
  const auto sine = KernelModel::sine();
  CHECK(kernel_eval(gin, {0, 0}, {0, 0}).real() == doctest::Approx(1.0 / kPi).epsilon(1e-15));
  CHECK(std::abs(kernel_eval(sine, {0.3, 0}, {1.3, 0})) < 1e-15);
  CHECK(kernel_eval(sine, {0.7, 0}, {0.7, 0}).real() == 1.0);

  // |z - w| = 1 on a common circle: |K| = (1/pi) e^{-1/2}.
  const double rho = 2.0;
  const double half_angle = std::asin(0.5 / rho);
  const Vec2 z = rotate({rho, 0.0}, half_angle);
  const Vec2 w = rotate({rho, 0.0}, -half_angle);
  CHECK(norm(z - w) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(kernel_eval(gin, z, w)) == doctest::Approx(std::exp(-0.5) / kPi).epsilon(1e-14));

  std::mt19937_64 g(3);
  for (int k = 0; k < 200; ++k) {
    const Vec2 x = random_point(g, 6.0);
    const Vec2 y = random_point(g, 6.0);
    CHECK(std::abs(kernel_eval(gin, x, y) - std::conj(kernel_eval(gin, y, x))) < 1e-15);
    CHECK(kernel_eval(gin, x, x).real() == doctest::Approx(1.0 / kPi).epsilon(1e-15));
    const Vec2 x1{x.x, 0.0};
    const Vec2 y1{y.x, 0.0};
    CHECK(std::abs(kernel_eval(sine, x1, y1) - std::conj(kernel_eval(sine, y1, x1))) < 1e-15);
  }
}

TEST_CASE("k-point correlation") {
  const auto gin = KernelModel::ginibre();
  const Vec2 one[] = {{3.0, -1.0}};
  CHECK(k_point_correlation(gin, one) == doctest::Approx(1.0 / kPi).epsilon(1e-14));
  const Vec2 same[] = {{0.5, 0.5}, {0.5, 0.5}};
  CHECK(k_point_correlation(gin, same) == 0.0);

  std::mt19937_64 g(11);
  for (int k = 0; k < 50; ++k) {
    const Vec2 x = random_point(g, 5.0);
    const Vec2 y = random_point(g, 5.0);
    const double r2 = norm2(x - y);
    const Vec2 pair[] = {x, y};
    // det [[1/pi, K],[conj K, 1/pi]] with |K|^2 = e^{-r^2}/pi^2.
    CHECK(k_point_correlation(gin, pair) == doctest::Approx((1.0 - std::exp(-r2)) / (kPi * kPi)).epsilon(1e-10));
    CHECK(k_point_correlation(gin, pair) <= 1.0 / (kPi * kPi) + 1e-15);
  }

  SUBCASE("permutation invariance") {
    std::vector<Vec2> pts;
    for (int k = 0; k < 5; ++k) pts.push_back(random_point(g, 2.0));
    const double base = k_point_correlation(gin, pts);
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x; });
    do {
      CHECK(k_point_correlation(gin, pts) == doctest::Approx(base).epsilon(1e-10));
    } while (std::next_permutation(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x; }));
  }

  SUBCASE("k outside 1..8") {
    std::vector<Vec2> nine(9, Vec2{});
    CHECK_THROWS_AS(k_point_correlation(gin, std::span<const Vec2>()), PreconditionError);
    CHECK_THROWS_AS(k_point_correlation(gin, nine), PreconditionError);
  }

  SUBCASE("pair correlation closed forms") {
    CHECK(kernel_pair_correlation(gin, 1.3) == doctest::Approx(1.0 - std::exp(-1.69)).epsilon(1e-12));
    const double t = kPi * 0.4;
    CHECK(kernel_pair_correlation(KernelModel::sine(), 0.4) ==
          doctest::Approx(1.0 - (std::sin(t) / t) * (std::sin(t) / t)).epsilon(1e-12));
  }
}

TEST_CASE("configuration CSV round trip") {
  const auto c = sample_ginibre({50, 2, 4, 0.2});
  std::ostringstream os;
  write_csv(os, c);
  CHECK(os.str().rfind("dim,n\n2,50\n", 0) == 0);
  std::istringstream is(os.str());
  const auto back = read_csv(is);
  CHECK(back.dim == 2);
  CHECK(back.points == c.points);

  const auto d = sample_dyson_bulk({100, 2, 4, 0.3});
  std::ostringstream os1;
  write_csv(os1, d);
  std::istringstream is1(os1.str());
  CHECK(read_csv(is1).points == d.points);

  std::istringstream bad("dim,n\n2,3\n1,2\n");
  CHECK_THROWS_AS(read_csv(bad), PreconditionError);
}

TEST_CASE("configuration validation") {
  Configuration c;
  c.dim = 2;
  c.window = Disk{1.0};
  c.points = {{0.1, 0.1}, {0.1, 0.1}};
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.points = {{0.1, 0.1}, {2.0, 0.0}};
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.points = {{0.1, 0.1}, {0.2, 0.0}};
  CHECK_NOTHROW(c.validate());
}
