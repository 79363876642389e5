#include "isde/drift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <utility>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "isde/compensated.hpp"
#include "isde/errors.hpp"

namespace isde {

namespace {

void check_dim(const DriftSpec& spec, const Configuration& state) {
  if (state.dim != spec.dim()) {
    throw PreconditionError(fmt::format("drift model expects dim {}, configuration has dim {}", spec.dim(), state.dim));
  }
}

void check_index(const Configuration& state, std::size_t i) {
  if (i >= state.size()) {
    throw PreconditionError(fmt::format("particle index {} out of range for {} points", i, state.size()));
  }
}

Vec2 checked_pair(InteractionModel model, double beta, Vec2 x, Vec2 y, std::size_t i, std::size_t j) {
  if (x == y) throw SingularityError(fmt::format("particles {} and {} coincide", i, j));
  return pair_interaction(model, x, y, beta);
}

// Indices j != skip with key(j) < radius, sorted by (key, index).
template <typename Key>
std::vector<std::pair<double, std::size_t>> ordered_within(std::size_t count, std::size_t skip, double radius,
                                                           Key key) {
  std::vector<std::pair<double, std::size_t>> out;
  for (std::size_t j = 0; j < count; ++j) {
    if (j == skip) continue;
    const double d = key(j);
    if (d < radius) out.emplace_back(d, j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double point_norm(const DriftSpec& spec, Vec2 p) { return spec.dim() == 2 ? norm(p) : std::abs(p.x); }

}  // namespace

void DriftSpec::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw PreconditionError(fmt::format("beta must be positive, got {}", beta));
  if (!std::isfinite(confinement_coefficient)) throw PreconditionError("confinement_coefficient must be finite");
  if (representation != Representation::FullSum && !(radius > 0.0)) {
    throw PreconditionError(fmt::format("truncated representation needs radius > 0, got {}", radius));
  }
}

std::string_view to_string(InteractionModel model) {
  return model == InteractionModel::Ginibre2D ? "ginibre2d" : "dyson1d";
}

std::string_view to_string(Representation representation) {
  switch (representation) {
    case Representation::FullSum:
      return "full";
    case Representation::ParticleCenteredTruncation:
      return "particle";
    case Representation::OriginCenteredTruncationWithConfinement:
      return "origin";
  }
  return "?";
}

InteractionModel parse_interaction_model(std::string_view name) {
  if (name == "ginibre2d") return InteractionModel::Ginibre2D;
  if (name == "dyson1d") return InteractionModel::Dyson1D;
  throw PreconditionError(fmt::format("unknown interaction model '{}' (expected ginibre2d or dyson1d)", name));
}

Representation parse_representation(std::string_view name) {
  if (name == "full") return Representation::FullSum;
  if (name == "particle") return Representation::ParticleCenteredTruncation;
  if (name == "origin") return Representation::OriginCenteredTruncationWithConfinement;
  throw PreconditionError(fmt::format("unknown drift representation '{}' (expected full, particle or origin)", name));
}

double reversible_confinement(InteractionModel model, double beta) {
  return model == InteractionModel::Ginibre2D ? 1.0 : beta / 4.0;
}

Vec2 pair_interaction(InteractionModel model, Vec2 x, Vec2 y, double beta) {
  if (model == InteractionModel::Ginibre2D) {
    const Vec2 d = x - y;
    const double r2 = norm2(d);
    if (r2 == 0.0) throw SingularityError("pair interaction evaluated at coincident points");
    return (1.0 / r2) * d;
  }
  const double d = x.x - y.x;
  if (d == 0.0) throw SingularityError("pair interaction evaluated at coincident points");
  return {0.5 * beta / d, 0.0};
}

Vec2 drift_full(const DriftSpec& spec, const Configuration& state, std::size_t i) {
  spec.validate();
  check_dim(spec, state);
  check_index(state, i);
  NeumaierSum2 acc;
  const Vec2 xi = state.points[i];
  for (std::size_t j = 0; j < state.size(); ++j) {
    if (j == i) continue;
    acc.add(checked_pair(spec.model, spec.beta, xi, state.points[j], i, j));
  }
  return acc.value() - spec.confinement_coefficient * xi;
}

DriftValue drift_truncated(const DriftSpec& spec, const Configuration& state, std::size_t i) {
  spec.validate();
  check_dim(spec, state);
  check_index(state, i);
  const auto& pts = state.points;
  const Vec2 xi = pts[i];

  switch (spec.representation) {
    case Representation::FullSum:
      return {drift_full(spec, state, i), state.size() - 1};

    case Representation::ParticleCenteredTruncation: {
      const auto order = ordered_within(pts.size(), i, spec.radius,
                                        [&](std::size_t j) { return point_norm(spec, pts[j] - xi); });
      NeumaierSum2 acc;
      for (const auto& [d, j] : order) acc.add(checked_pair(spec.model, spec.beta, xi, pts[j], i, j));
      return {acc.value(), order.size()};
    }

    case Representation::OriginCenteredTruncationWithConfinement: {
      const auto order =
          ordered_within(pts.size(), i, spec.radius, [&](std::size_t j) { return point_norm(spec, pts[j]); });
      NeumaierSum2 acc;
      for (const auto& [d, j] : order) acc.add(checked_pair(spec.model, spec.beta, xi, pts[j], i, j));
      return {acc.value() - spec.confinement_coefficient * xi, order.size()};
    }
  }
  throw PreconditionError("unknown drift representation");
}

DriftVector drift_field(const DriftSpec& spec, std::span<const Vec2> positions) {
  spec.validate();
  const std::size_t n = positions.size();
  DriftVector out;
  out.representation = spec.representation;
  out.radius = spec.radius;
  out.components.assign(n, Vec2{});

  switch (spec.representation) {
    case Representation::FullSum: {
      std::vector<NeumaierSum2> acc(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 xi = positions[i];
        for (std::size_t j = i + 1; j < n; ++j) {
          const Vec2 f = checked_pair(spec.model, spec.beta, xi, positions[j], i, j);
          acc[i].add(f);
          acc[j].add(-f);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        out.components[i] = acc[i].value() - spec.confinement_coefficient * positions[i];
      }
      out.pairs = n * (n - (n > 0 ? 1 : 0));
      return out;
    }

    case Representation::OriginCenteredTruncationWithConfinement: {
      // The ball is the same for every particle, so one radial ordering serves all.
      const auto order = ordered_within(n, n, spec.radius, [&](std::size_t j) { return point_norm(spec, positions[j]); });
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 xi = positions[i];
        NeumaierSum2 acc;
        for (const auto& [d, j] : order) {
          if (j == i) continue;
          acc.add(checked_pair(spec.model, spec.beta, xi, positions[j], i, j));
          ++out.pairs;
        }
        out.components[i] = acc.value() - spec.confinement_coefficient * xi;
      }
      return out;
    }

    case Representation::ParticleCenteredTruncation: {
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 xi = positions[i];
        const auto order =
            ordered_within(n, i, spec.radius, [&](std::size_t j) { return point_norm(spec, positions[j] - xi); });
        NeumaierSum2 acc;
        for (const auto& [d, j] : order) acc.add(checked_pair(spec.model, spec.beta, xi, positions[j], i, j));
        out.components[i] = acc.value();
        out.pairs += order.size();
      }
      return out;
    }
  }
  throw PreconditionError("unknown drift representation");
}

DriftVector drift_field(const DriftSpec& spec, const Configuration& state) {
  check_dim(spec, state);
  return drift_field(spec, std::span<const Vec2>(state.points));
}

DriftVector log_density_gradient(InteractionModel model, const Configuration& state, double beta) {
  DriftSpec spec;
  spec.model = model;
  spec.beta = beta;
  spec.representation = Representation::FullSum;
  spec.confinement_coefficient = reversible_confinement(model, beta);
  check_dim(spec, state);

  DriftVector out;
  out.representation = Representation::FullSum;
  out.components.reserve(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) out.components.push_back(drift_full(spec, state, i));
  out.pairs = state.size() * (state.size() > 0 ? state.size() - 1 : 0);
  return out;
}

std::size_t nearest_to_origin(const Configuration& state) {
  if (state.points.empty()) throw PreconditionError("nearest_to_origin on an empty configuration");
  const auto it = std::min_element(state.points.begin(), state.points.end(),
                                   [](Vec2 a, Vec2 b) { return norm2(a) < norm2(b); });
  return static_cast<std::size_t>(it - state.points.begin());
}

std::vector<GapSample> plural_isde_diagnostic(const Configuration& state, std::size_t i,
                                              std::span<const double> radii) {
  if (state.dim != 2) throw PreconditionError("plural_isde_diagnostic needs a planar configuration");
  check_index(state, i);
  const auto* disk = std::get_if<Disk>(&state.window);
  if (disk == nullptr) throw PreconditionError("plural_isde_diagnostic needs a disk window");
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0) || (k > 0 && !(radii[k] > radii[k - 1]))) {
      throw PreconditionError("radii must be positive and strictly increasing");
    }
  }
  const auto& pts = state.points;
  const Vec2 xi = pts[i];
  const double xi_norm = norm(xi);
  if (!(xi_norm < 0.5 * disk->radius)) {
    throw PreconditionError(fmt::format("particle {} at |x| = {} is outside the bulk (|x| < {} required)", i, xi_norm,
                                        0.5 * disk->radius));
  }

  const double inf = INFINITY;
  const auto by_particle = ordered_within(pts.size(), i, inf, [&](std::size_t j) { return norm(pts[j] - xi); });
  const auto by_origin = ordered_within(pts.size(), i, inf, [&](std::size_t j) { return norm(pts[j]); });

  NeumaierSum2 particle_sum;
  NeumaierSum2 origin_sum;
  std::size_t p = 0;
  std::size_t o = 0;
  std::vector<GapSample> out;
  out.reserve(radii.size());
  for (const double r : radii) {
    for (; p < by_particle.size() && by_particle[p].first < r; ++p) {
      const std::size_t j = by_particle[p].second;
      particle_sum.add(checked_pair(InteractionModel::Ginibre2D, 2.0, xi, pts[j], i, j));
    }
    for (; o < by_origin.size() && by_origin[o].first < r; ++o) {
      const std::size_t j = by_origin[o].second;
      origin_sum.add(checked_pair(InteractionModel::Ginibre2D, 2.0, xi, pts[j], i, j));
    }
    GapSample s;
    s.r = r;
    s.gap = norm(particle_sum.value() - origin_sum.value() + xi);
    s.pairs_particle = p;
    s.pairs_origin = o;
    s.saturated = p == by_particle.size() && o == by_origin.size();
    s.mesoscopic = r >= 1.0 && r + xi_norm <= 0.8 * disk->radius;
    out.push_back(s);
  }
  return out;
}

GapCurve aggregate_gaps(std::span<const std::vector<GapSample>> profiles) {
  GapCurve curve;
  curve.seeds = profiles.size();
  if (profiles.empty()) return curve;
  const std::size_t m = profiles.front().size();
  for (const auto& prof : profiles) {
    if (prof.size() != m) throw PreconditionError("gap profiles use different radius grids");
  }
  for (std::size_t k = 0; k < m; ++k) {
    NeumaierSum sum;
    for (const auto& prof : profiles) sum.add(prof[k].gap);
    const double mean = sum.value() / static_cast<double>(profiles.size());
    NeumaierSum sq;
    for (const auto& prof : profiles) sq.add((prof[k].gap - mean) * (prof[k].gap - mean));
    const double var = profiles.size() > 1 ? sq.value() / static_cast<double>(profiles.size() - 1) : 0.0;
    curve.radii.push_back(profiles.front()[k].r);
    curve.mean.push_back(mean);
    curve.stddev.push_back(std::sqrt(var));
  }
  return curve;
}

void write_gap_csv(std::ostream& out, const GapCurve& curve) {
  fmt::print(out, "r,gap_mean,gap_std,n_seeds\n");
  for (std::size_t k = 0; k < curve.radii.size(); ++k) {
    fmt::print(out, "{:.17g},{:.17g},{:.17g},{}\n", curve.radii[k], curve.mean[k], curve.stddev[k], curve.seeds);
  }
}

}  // namespace isde
