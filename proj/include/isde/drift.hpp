#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "isde/geometry.hpp"
#include "isde/pointfields.hpp"

namespace isde {

enum class InteractionModel { Ginibre2D, Dyson1D };

enum class Representation {
  FullSum,
  ParticleCenteredTruncation,
  OriginCenteredTruncationWithConfinement,
};

/// Selects one drift representation of the logarithmic derivative.
///
/// The linear term -confinement_coefficient * x_i is added by FullSum and by
/// the origin-centred truncation. The particle-centred truncation is a pure
/// pair sum and ignores it.
struct DriftSpec {
  InteractionModel model = InteractionModel::Ginibre2D;
  Representation representation = Representation::FullSum;
  double radius = 0.0;
  double beta = 2.0;
  double confinement_coefficient = 0.0;

  int dim() const { return model == InteractionModel::Ginibre2D ? 2 : 1; }
  void validate() const;
};

std::string_view to_string(InteractionModel model);
std::string_view to_string(Representation representation);
/// Accepts the names produced by to_string; throws PreconditionError otherwise.
InteractionModel parse_interaction_model(std::string_view name);
Representation parse_representation(std::string_view name);

/// Confinement coefficient under which the finite-N ensemble is reversible:
/// 1 for Ginibre, beta/4 for the Hermite beta-ensemble.
double reversible_confinement(InteractionModel model, double beta);

/// Drift of one particle with the number of pair terms that entered it.
struct DriftValue {
  Vec2 value;
  std::size_t pairs = 0;
};

/// Drift of every particle of a configuration.
struct DriftVector {
  std::vector<Vec2> components;
  Representation representation = Representation::FullSum;
  double radius = 0.0;
  std::size_t pairs = 0;
};

/// Force of y on x: (x-y)/|x-y|^2 in the plane, (beta/2)/(x-y) on the line.
Vec2 pair_interaction(InteractionModel model, Vec2 x, Vec2 y, double beta = 2.0);

/// sum_{j != i} pair_interaction(x_i, x_j) - confinement_coefficient * x_i,
/// accumulated in index order with compensation. Ignores spec.representation.
Vec2 drift_full(const DriftSpec& spec, const Configuration& state, std::size_t i);

/// One of the truncated representations (or FullSum) for particle i. Pair
/// terms are accumulated in ascending distance from the ball centre with
/// compensated summation; balls are open.
DriftValue drift_truncated(const DriftSpec& spec, const Configuration& state, std::size_t i);

/// Drift of every particle under spec. FullSum uses a symmetric pair loop,
/// the origin-centred truncation a single radial ordering shared by all
/// particles, the particle-centred one a per-particle ordering.
DriftVector drift_field(const DriftSpec& spec, std::span<const Vec2> positions);
DriftVector drift_field(const DriftSpec& spec, const Configuration& state);

/// Half the gradient of the finite-N log density (Ginibre, or the Hermite
/// ensemble at the given beta): the reversible drift of the finite system.
DriftVector log_density_gradient(InteractionModel model, const Configuration& state, double beta = 2.0);

/// Index of the point closest to the origin.
std::size_t nearest_to_origin(const Configuration& state);

struct GapSample {
  double r = 0.0;
  double gap = 0.0;
  std::size_t pairs_particle = 0;
  std::size_t pairs_origin = 0;
  /// Both balls contain every other particle; gap == |x_i| identically.
  bool saturated = false;
  /// 1 <= r and the particle ball stays inside 0.8 of the window radius.
  bool mesoscopic = false;
};

/// gap(r) = | S_particle(r) - S_origin(r) + x_i | for the two truncated
/// Coulomb pair sums around particle i of a planar configuration.
std::vector<GapSample> plural_isde_diagnostic(const Configuration& state, std::size_t i,
                                              std::span<const double> radii);

/// Seed-aggregated gap profile.
struct GapCurve {
  std::vector<double> radii;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::size_t seeds = 0;
};

/// Mean and sample standard deviation per radius across profiles computed on
/// the same radius grid.
GapCurve aggregate_gaps(std::span<const std::vector<GapSample>> profiles);

/// CSV `r,gap_mean,gap_std,n_seeds` with 17 significant digits.
void write_gap_csv(std::ostream& out, const GapCurve& curve);

}  // namespace isde
