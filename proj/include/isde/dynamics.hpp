#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "isde/drift.hpp"
#include "isde/geometry.hpp"
#include "isde/pointfields.hpp"

namespace isde {

/// Ordered particle positions of the finite-N system with stable labels.
struct LabeledState {
  int dim = 2;
  std::vector<Vec2> positions;
  std::vector<std::size_t> labels;
  double time = 0.0;
  std::uint64_t step = 0;

  /// Labels 0..n-1 in the configuration's point order, time 0.
  static LabeledState from_configuration(const Configuration& config);
};

struct IntegratorParams {
  double dt = 1e-3;
  double min_dt = 1e-3 / 1024.0;
  double guard_distance = 1e-6;
  int max_substep_depth = 10;
  std::uint64_t seed = 0;
  /// Test hook: integrate the drift ODE alone.
  bool noise = true;

  /// dt with min_dt = dt / 2^10 and the default guard.
  static IntegratorParams with_step(double dt, std::uint64_t seed);
  void validate() const;
};

/// Standard Gaussian vector of the stream keyed by (seed, label, step, node).
/// `node` numbers the substep binary tree: 1 is the full step, the halves of
/// node k are 2k and 2k+1. Only the x component is drawn in dim 1.
Vec2 noise_increment(std::uint64_t seed, std::size_t label, std::uint64_t step, std::uint64_t node, int dim);

struct StepOutcome {
  LabeledState state;
  std::size_t rejected = 0;
};

/// One Euler-Maruyama step x += b dt + sqrt(dt) xi. A proposal with a
/// non-finite coordinate, a pair closer than guard_distance, or (in dim 1) a
/// change of particle order is rejected and replaced by two half-steps with
/// fresh noise, recursively. Throws CollisionError when the depth or min_dt
/// budget runs out.
StepOutcome em_step_counted(const LabeledState& state, const DriftSpec& spec, const IntegratorParams& params);
LabeledState em_step(const LabeledState& state, const DriftSpec& spec, const IntegratorParams& params);

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<LabeledState> snapshots;
  DriftSpec spec;
  IntegratorParams params;
  Window window = Disk{0.0};
  std::size_t rejected_steps = 0;
  bool failed = false;
  std::string failure;
};

/// Integrates from `init` to t_end, recording a snapshot at t = 0, every
/// snapshot_every, and at t_end. A CollisionError ends the run early with
/// failed = true and the snapshots taken so far.
TrajectoryRecord run_simulation(const LabeledState& init, const Window& window, const DriftSpec& spec,
                                const IntegratorParams& params, double t_end, double snapshot_every);
TrajectoryRecord run_simulation(const Configuration& init, const DriftSpec& spec, const IntegratorParams& params,
                                double t_end, double snapshot_every);

/// Per-snapshot configurations with labels dropped. Windows grow to contain
/// particles that drifted past the initial window.
std::vector<Configuration> to_unlabeled(const TrajectoryRecord& traj);

struct PathPoint {
  double t = 0.0;
  Vec2 position;
};

std::vector<PathPoint> tagged_particle_path(const TrajectoryRecord& traj, std::size_t label);

/// JSON lines: one header object, then `{"t":..,"points":[[x,y],..]}` per snapshot.
void write_trajectory_jsonl(std::ostream& out, const TrajectoryRecord& traj);
TrajectoryRecord read_trajectory_jsonl(std::istream& in);

}  // namespace isde
