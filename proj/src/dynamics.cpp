#include "isde/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "isde/errors.hpp"
#include "isde/rng.hpp"

namespace isde {

namespace {

struct Violation {
  std::size_t a;
  std::size_t b;
  std::string reason;
};

// Checks a proposed move from `before` to `after`.
std::optional<Violation> find_violation(int dim, const std::vector<Vec2>& before, const std::vector<Vec2>& after,
                                        double guard) {
  const std::size_t n = after.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(after[i])) return Violation{i, i, "non-finite position"};
  }
  if (dim == 1) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return before[a].x < before[b].x; });
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const std::size_t a = order[k];
      const std::size_t b = order[k + 1];
      const double gap = after[b].x - after[a].x;
      if (gap <= 0.0) return Violation{a, b, "particles crossed"};
      if (gap < guard) return Violation{a, b, "pair closer than guard distance"};
    }
    return std::nullopt;
  }
  const double guard2 = guard * guard;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (norm2(after[i] - after[j]) < guard2) return Violation{i, j, "pair closer than guard distance"};
    }
  }
  return std::nullopt;
}

class Stepper {
 public:
  Stepper(const DriftSpec& spec, const IntegratorParams& params) : spec_(spec), params_(params) {}

  // Advances `state` by h; node indexes the substep tree of the current step.
  void advance(LabeledState& state, double h, std::uint64_t node, int depth) {
    const auto drift = drift_field(spec_, std::span<const Vec2>(state.positions));
    const double sqrt_h = std::sqrt(h);
    std::vector<Vec2> proposal(state.positions.size());
    for (std::size_t i = 0; i < proposal.size(); ++i) {
      Vec2 move = h * drift.components[i];
      if (params_.noise) move += sqrt_h * noise_increment(params_.seed, state.labels[i], state.step, node, state.dim);
      proposal[i] = state.positions[i] + move;
    }

    const auto violation = find_violation(state.dim, state.positions, proposal, params_.guard_distance);
    if (!violation) {
      state.positions = std::move(proposal);
      state.time += h;
      return;
    }
    const double half = 0.5 * h;
    if (depth >= params_.max_substep_depth || half < params_.min_dt) {
      const std::size_t la = state.labels[violation->a];
      const std::size_t lb = state.labels[violation->b];
      throw CollisionError(fmt::format("{} (labels {} and {}) at t = {}; substep budget exhausted", violation->reason,
                                       la, lb, state.time),
                           la, lb, state.time);
    }
    ++rejected_;
    advance(state, half, 2 * node, depth + 1);
    advance(state, half, 2 * node + 1, depth + 1);
  }

  std::size_t rejected() const { return rejected_; }

 private:
  const DriftSpec& spec_;
  const IntegratorParams& params_;
  std::size_t rejected_ = 0;
};

std::string json_number(double v) {
  if (!std::isfinite(v)) return "null";
  return fmt::format("{:.17g}", v);
}

double number_or_inf(const nlohmann::json& j) { return j.is_null() ? INFINITY : j.get<double>(); }

Window enclosing(const Window& base, const std::vector<Vec2>& points) {
  if (const auto* d = std::get_if<Disk>(&base)) {
    double r = d->radius;
    for (const Vec2 p : points) {
      const double pn = norm(p);
      if (pn > r) r = std::nextafter(pn, INFINITY);
    }
    return Disk{r};
  }
  Interval iv = std::get<Interval>(base);
  for (const Vec2 p : points) {
    iv.lo = std::min(iv.lo, p.x);
    iv.hi = std::max(iv.hi, p.x);
  }
  return iv;
}

}  // namespace

LabeledState LabeledState::from_configuration(const Configuration& config) {
  LabeledState s;
  s.dim = config.dim;
  s.positions = config.points;
  s.labels.resize(config.points.size());
  std::iota(s.labels.begin(), s.labels.end(), std::size_t{0});
  return s;
}

IntegratorParams IntegratorParams::with_step(double dt, std::uint64_t seed) {
  IntegratorParams p;
  p.dt = dt;
  p.min_dt = dt / 1024.0;
  p.seed = seed;
  return p;
}

void IntegratorParams::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionError(fmt::format("dt must be positive, got {}", dt));
  if (!(min_dt > 0.0 && min_dt <= dt)) throw PreconditionError(fmt::format("min_dt must lie in (0, dt], got {}", min_dt));
  if (!(guard_distance > 0.0)) throw PreconditionError(fmt::format("guard_distance must be positive, got {}", guard_distance));
  if (max_substep_depth < 1) throw PreconditionError(fmt::format("max_substep_depth must be >= 1, got {}", max_substep_depth));
}

Vec2 noise_increment(std::uint64_t seed, std::size_t label, std::uint64_t step, std::uint64_t node, int dim) {
  SplitMix64 engine(derive_seed({seed, static_cast<std::uint64_t>(label), step, node}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec2 xi;
  xi.x = normal(engine);
  if (dim == 2) xi.y = normal(engine);
  return xi;
}

StepOutcome em_step_counted(const LabeledState& state, const DriftSpec& spec, const IntegratorParams& params) {
  params.validate();
  spec.validate();
  if (state.dim != spec.dim()) {
    throw PreconditionError(fmt::format("drift model expects dim {}, state has dim {}", spec.dim(), state.dim));
  }
  if (state.labels.size() != state.positions.size()) throw PreconditionError("labels and positions differ in length");

  StepOutcome out{state, 0};
  Stepper stepper(spec, params);
  const double t0 = state.time;
  stepper.advance(out.state, params.dt, 1, 0);
  out.state.time = t0 + params.dt;
  ++out.state.step;
  out.rejected = stepper.rejected();
  return out;
}

LabeledState em_step(const LabeledState& state, const DriftSpec& spec, const IntegratorParams& params) {
  return em_step_counted(state, spec, params).state;
}

TrajectoryRecord run_simulation(const LabeledState& init, const Window& window, const DriftSpec& spec,
                                const IntegratorParams& params, double t_end, double snapshot_every) {
  params.validate();
  spec.validate();
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw PreconditionError(fmt::format("t_end must be >= 0, got {}", t_end));
  if (!(snapshot_every > 0.0)) throw PreconditionError(fmt::format("snapshot_every must be positive, got {}", snapshot_every));
  if (init.dim != spec.dim()) {
    throw PreconditionError(fmt::format("drift model expects dim {}, initial state has dim {}", spec.dim(), init.dim));
  }

  TrajectoryRecord traj;
  traj.spec = spec;
  traj.params = params;
  traj.window = window;
  traj.times.push_back(init.time);
  traj.snapshots.push_back(init);

  const auto steps = static_cast<std::uint64_t>(std::llround(t_end / params.dt));
  const auto stride = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(snapshot_every / params.dt)));
  LabeledState state = init;
  try {
    for (std::uint64_t k = 1; k <= steps; ++k) {
      auto outcome = em_step_counted(state, spec, params);
      traj.rejected_steps += outcome.rejected;
      state = std::move(outcome.state);
      if (k % stride == 0 || k == steps) {
        traj.times.push_back(state.time);
        traj.snapshots.push_back(state);
      }
    }
  } catch (const CollisionError& e) {
    traj.failed = true;
    traj.failure = e.what();
  }
  return traj;
}

TrajectoryRecord run_simulation(const Configuration& init, const DriftSpec& spec, const IntegratorParams& params,
                                double t_end, double snapshot_every) {
  return run_simulation(LabeledState::from_configuration(init), init.window, spec, params, t_end, snapshot_every);
}

std::vector<Configuration> to_unlabeled(const TrajectoryRecord& traj) {
  std::vector<Configuration> out;
  out.reserve(traj.snapshots.size());
  for (const auto& snap : traj.snapshots) {
    Configuration c;
    c.dim = snap.dim;
    c.points = snap.positions;
    c.window = enclosing(traj.window, snap.positions);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<PathPoint> tagged_particle_path(const TrajectoryRecord& traj, std::size_t label) {
  std::vector<PathPoint> path;
  path.reserve(traj.snapshots.size());
  for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
    const auto& snap = traj.snapshots[s];
    const auto it = std::find(snap.labels.begin(), snap.labels.end(), label);
    if (it == snap.labels.end()) throw PreconditionError(fmt::format("unknown particle label {}", label));
    path.push_back({traj.times[s], snap.positions[static_cast<std::size_t>(it - snap.labels.begin())]});
  }
  return path;
}

void write_trajectory_jsonl(std::ostream& out, const TrajectoryRecord& traj) {
  const int dim = traj.spec.dim();
  const auto& p = traj.params;
  const auto& s = traj.spec;
  std::string window;
  if (const auto* d = std::get_if<Disk>(&traj.window)) {
    window = fmt::format("{{\"disk\":{}}}", json_number(d->radius));
  } else {
    const auto& iv = std::get<Interval>(traj.window);
    window = fmt::format("{{\"interval\":[{},{}]}}", json_number(iv.lo), json_number(iv.hi));
  }
  std::string labels;
  if (!traj.snapshots.empty()) {
    for (std::size_t k = 0; k < traj.snapshots.front().labels.size(); ++k) {
      if (k > 0) labels += ',';
      labels += std::to_string(traj.snapshots.front().labels[k]);
    }
  }
  fmt::print(out,
             "{{\"kind\":\"trajectory\",\"dim\":{},\"seed\":{},"
             "\"params\":{{\"dt\":{},\"min_dt\":{},\"guard_distance\":{},\"max_substep_depth\":{},\"noise\":{}}},"
             "\"spec\":{{\"model\":\"{}\",\"representation\":\"{}\",\"radius\":{},\"beta\":{},"
             "\"confinement_coefficient\":{}}},"
             "\"window\":{},\"labels\":[{}],\"snapshots\":{},\"rejected_steps\":{},\"failed\":{},\"failure\":{}}}\n",
             dim, p.seed, json_number(p.dt), json_number(p.min_dt), json_number(p.guard_distance), p.max_substep_depth,
             p.noise, to_string(s.model), to_string(s.representation), json_number(s.radius), json_number(s.beta),
             json_number(s.confinement_coefficient), window, labels, traj.snapshots.size(), traj.rejected_steps,
             traj.failed, nlohmann::json(traj.failure).dump());

  for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
    std::string line = fmt::format("{{\"t\":{},\"points\":[", json_number(traj.times[k]));
    const auto& pos = traj.snapshots[k].positions;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      if (i > 0) line += ',';
      line += dim == 2 ? fmt::format("[{},{}]", json_number(pos[i].x), json_number(pos[i].y))
                       : fmt::format("[{}]", json_number(pos[i].x));
    }
    line += "]}\n";
    out << line;
  }
}

TrajectoryRecord read_trajectory_jsonl(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw PreconditionError("trajectory JSONL: empty input");
  TrajectoryRecord traj;
  std::vector<std::size_t> labels;
  int dim = 2;
  try {
    const auto head = nlohmann::json::parse(line);
    if (head.at("kind") != "trajectory") throw PreconditionError("trajectory JSONL: header kind is not 'trajectory'");
    dim = head.at("dim").get<int>();
    const auto& p = head.at("params");
    traj.params.seed = head.at("seed").get<std::uint64_t>();
    traj.params.dt = p.at("dt").get<double>();
    traj.params.min_dt = p.at("min_dt").get<double>();
    traj.params.guard_distance = p.at("guard_distance").get<double>();
    traj.params.max_substep_depth = p.at("max_substep_depth").get<int>();
    traj.params.noise = p.at("noise").get<bool>();
    const auto& s = head.at("spec");
    traj.spec.model = parse_interaction_model(s.at("model").get<std::string>());
    traj.spec.representation = parse_representation(s.at("representation").get<std::string>());
    traj.spec.radius = number_or_inf(s.at("radius"));
    traj.spec.beta = s.at("beta").get<double>();
    traj.spec.confinement_coefficient = s.at("confinement_coefficient").get<double>();
    const auto& w = head.at("window");
    if (w.contains("disk")) {
      traj.window = Disk{number_or_inf(w.at("disk"))};
    } else {
      traj.window = Interval{w.at("interval").at(0).get<double>(), w.at("interval").at(1).get<double>()};
    }
    labels = head.at("labels").get<std::vector<std::size_t>>();
    traj.rejected_steps = head.at("rejected_steps").get<std::size_t>();
    traj.failed = head.at("failed").get<bool>();
    traj.failure = head.at("failure").get<std::string>();

    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto snap = nlohmann::json::parse(line);
      LabeledState st;
      st.dim = dim;
      st.time = snap.at("t").get<double>();
      st.step = static_cast<std::uint64_t>(std::llround(st.time / traj.params.dt));
      st.labels = labels;
      for (const auto& pt : snap.at("points")) {
        st.positions.push_back({pt.at(0).get<double>(), dim == 2 ? pt.at(1).get<double>() : 0.0});
      }
      if (st.positions.size() != labels.size()) throw PreconditionError("trajectory JSONL: snapshot size mismatch");
      traj.times.push_back(st.time);
      traj.snapshots.push_back(std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(fmt::format("trajectory JSONL: {}", e.what()));
  }
  return traj;
}

}  // namespace isde
