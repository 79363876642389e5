#include "isde/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "isde/drift.hpp"
#include "isde/dynamics.hpp"
#include "isde/estimators.hpp"
#include "isde/pointfields.hpp"
#include "isde/rng.hpp"

namespace isde {

namespace {

constexpr std::string_view kToolVersion = "1.0.0";
constexpr std::string_view kManifestName = "manifest.json";

// ---------------------------------------------------------------------------
// value parsing

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, std::string_view v) {
  const std::string t = trim(v);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
  }
  return out;
}

template <typename Int>
Int to_integer(const std::string& key, std::string_view v) {
  const std::string t = trim(v);
  Int out{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, v));
  }
  return out;
}

bool to_bool(const std::string& key, std::string_view v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto pos = v.find(',', start);
    const auto item = trim(v.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.field", [](auto& c, auto&, auto& v) { c.field = trim(v); }},
      {"model.n", [](auto& c, auto& k, auto& v) { c.n = to_integer<std::size_t>(k, v); }},
      {"model.beta", [](auto& c, auto& k, auto& v) { c.beta = to_integer<int>(k, v); }},
      {"model.intensity", [](auto& c, auto& k, auto& v) { c.intensity = to_double(k, v); }},
      {"model.bulk_fraction", [](auto& c, auto& k, auto& v) { c.bulk_fraction = to_double(k, v); }},
      {"drift.representation", [](auto& c, auto&, auto& v) { c.representation = trim(v); }},
      {"drift.radius", [](auto& c, auto& k, auto& v) { c.radius = to_double(k, v); }},
      {"drift.confinement",
       [](auto& c, auto& k, auto& v) {
         if (trim(v) == "auto") {
           c.confinement.reset();
         } else {
           c.confinement = to_double(k, v);
         }
       }},
      {"integrator.dt", [](auto& c, auto& k, auto& v) { c.dt = to_double(k, v); }},
      {"integrator.min_dt", [](auto& c, auto& k, auto& v) { c.min_dt = to_double(k, v); }},
      {"integrator.guard_distance", [](auto& c, auto& k, auto& v) { c.guard_distance = to_double(k, v); }},
      {"integrator.max_substep_depth", [](auto& c, auto& k, auto& v) { c.max_substep_depth = to_integer<int>(k, v); }},
      {"integrator.t_end", [](auto& c, auto& k, auto& v) { c.t_end = to_double(k, v); }},
      {"integrator.snapshot_every", [](auto& c, auto& k, auto& v) { c.snapshot_every = to_double(k, v); }},
      {"diagnostic.radii",
       [](auto& c, auto& k, auto& v) {
         c.radii.clear();
         for (const auto& item : split_list(v)) c.radii.push_back(to_double(k, item));
       }},
      {"estimator.bins", [](auto& c, auto& k, auto& v) { c.bins = to_integer<std::size_t>(k, v); }},
      {"estimator.r_max", [](auto& c, auto& k, auto& v) { c.r_max = to_double(k, v); }},
      {"estimator.sub_window", [](auto& c, auto& k, auto& v) { c.sub_window = to_double(k, v); }},
      {"estimator.tolerance", [](auto& c, auto& k, auto& v) { c.tolerance = to_double(k, v); }},
      {"estimator.z", [](auto& c, auto& k, auto& v) { c.z = to_double(k, v); }},
      {"estimator.small_gap", [](auto& c, auto& k, auto& v) { c.small_gap = to_double(k, v); }},
      {"run.seeds", [](auto& c, auto&, auto& v) { c.seeds = parse_seeds(v); }},
      {"run.threads", [](auto& c, auto& k, auto& v) { c.threads = to_integer<std::size_t>(k, v); }},
      {"run.save_trajectories", [](auto& c, auto& k, auto& v) { c.save_trajectories = to_bool(k, v); }},
      {"run.out", [](auto& c, auto&, auto& v) { c.out = trim(v); }},
  };
  return table;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError(fmt::format("unknown configuration key '{}'", key));
  try {
    it->second(cfg, key, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
}

// ---------------------------------------------------------------------------
// model plumbing

int field_dim(const std::string& field) { return (field == "dyson" || field == "poisson1d") ? 1 : 2; }

double field_intensity(const ExperimentConfig& c) {
  if (c.intensity > 0.0) return c.intensity;
  return field_dim(c.field) == 2 ? 1.0 / std::numbers::pi : 1.0;
}

SamplerParams sampler_params(const ExperimentConfig& c, std::uint64_t seed) {
  return SamplerParams{c.n, c.beta, seed, c.bulk_fraction};
}

Window poisson_window(const ExperimentConfig& c) {
  const double lambda = field_intensity(c);
  if (field_dim(c.field) == 2) return Disk{std::sqrt(static_cast<double>(c.n) / (std::numbers::pi * lambda))};
  const double half = 0.5 * static_cast<double>(c.n) / lambda;
  return Interval{-half, half};
}

// Equilibrium sample in the coordinates the statistics are taken in.
Configuration sample_field(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.field == "ginibre") return sample_ginibre(sampler_params(c, seed));
  if (c.field == "dyson") return sample_dyson_bulk(sampler_params(c, seed));
  return sample_poisson(field_intensity(c), poisson_window(c), seed);
}

// Initial state of the dynamics; Dyson dynamics run on the raw spectrum.
Configuration initial_state(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.field == "dyson") return sample_hermite(sampler_params(c, seed));
  return sample_field(c, seed);
}

DriftSpec drift_spec(const ExperimentConfig& c) {
  DriftSpec s;
  s.model = field_dim(c.field) == 2 ? InteractionModel::Ginibre2D : InteractionModel::Dyson1D;
  s.representation = parse_representation(c.representation);
  s.radius = c.radius;
  s.beta = c.beta;
  s.confinement_coefficient = c.confinement.value_or(reversible_confinement(s.model, s.beta));
  return s;
}

IntegratorParams integrator_params(const ExperimentConfig& c, std::uint64_t seed) {
  IntegratorParams p;
  p.dt = c.dt;
  p.min_dt = c.min_dt > 0.0 ? c.min_dt : c.dt / 1024.0;
  p.guard_distance = c.guard_distance;
  p.max_substep_depth = c.max_substep_depth;
  // Noise streams are keyed apart from the sampler stream of the same seed.
  p.seed = derive_seed({seed, 0x6E6F697365ULL});
  return p;
}

Bins estimator_bins(const ExperimentConfig& c) { return Bins::uniform(0.0, c.r_max, c.bins); }

double ginibre_sub_radius(const ExperimentConfig& c) {
  return c.sub_window > 0.0 ? c.sub_window : std::sqrt(static_cast<double>(c.n)) - c.r_max - 3.0;
}

std::size_t bulk_count(const ExperimentConfig& c) {
  return std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(c.bulk_fraction * static_cast<double>(c.n))), 2, c.n);
}

double dyson_sub_half_width(const ExperimentConfig& c) {
  return c.sub_window > 0.0 ? c.sub_window : 0.5 * static_cast<double>(bulk_count(c)) - c.r_max - 1.0;
}

// ---------------------------------------------------------------------------
// seed fan-out

template <typename F>
auto map_seeds(const std::vector<std::uint64_t>& seeds, std::size_t threads, F f) {
  using R = decltype(f(seeds.front()));
  std::vector<std::optional<R>> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < seeds.size(); k = next++) {
      try {
        results[k].emplace(f(seeds[k]));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min(threads, seeds.size()));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  }
  // Report the failure of the lowest seed index so reruns fail identically.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(seeds.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

// ---------------------------------------------------------------------------
// artifacts

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", digest[k]);
  return hex;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class RunContext {
 public:
  explicit RunContext(const ExperimentConfig& cfg) : cfg_(cfg) {}

  void write(const std::string& name, const std::string& content) {
    const auto path = cfg_.out / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(fmt::format("cannot open {} for writing", path.string()));
    f << content;
    f.close();
    if (!f) throw Error(fmt::format("failed writing {}", path.string()));
    files_.push_back({{"path", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
  }

  void check(const std::string& name, bool pass, const std::string& detail) {
    checks_.push_back({{"name", name}, {"pass", pass}, {"detail", detail}});
  }

  nlohmann::json& stats() { return stats_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }
  const std::string& stage() const { return stage_; }

  nlohmann::json manifest(const std::string& status, const std::string& failure, double wall, const std::string& started) const {
    nlohmann::json m;
    m["tool"] = "isde-lab";
    m["version"] = kToolVersion;
    m["experiment"] = to_string(cfg_.kind);
    m["status"] = status;
    if (!failure.empty()) m["failure"] = {{"stage", stage_}, {"message", failure}};
    m["seeds"] = cfg_.seeds;
    m["resolved_config"] = cfg_.to_ini();
    m["started_utc"] = started;
    m["wall_time_seconds"] = wall;
    m["files"] = files_.empty() ? nlohmann::json::array() : nlohmann::json(files_);
    m["checks"] = checks_.empty() ? nlohmann::json::array() : nlohmann::json(checks_);
    m["stats"] = stats_.is_null() ? nlohmann::json::object() : stats_;
    return m;
  }

 private:
  const ExperimentConfig& cfg_;
  std::vector<nlohmann::json> files_;
  std::vector<nlohmann::json> checks_;
  nlohmann::json stats_;
  std::string stage_ = "setup";
};

std::string config_csv(const Configuration& c) {
  std::ostringstream os;
  write_csv(os, c);
  return os.str();
}

// ---------------------------------------------------------------------------
// experiments

void run_sample(const ExperimentConfig& cfg, RunContext& ctx) {
  ctx.set_stage("sampling");
  const auto configs = map_seeds(cfg.seeds, cfg.threads, [&](std::uint64_t s) { return sample_field(cfg, s); });
  ctx.set_stage("writing");
  double total = 0.0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    ctx.write(fmt::format("config_seed{}.csv", cfg.seeds[k]), config_csv(configs[k]));
    total += static_cast<double>(configs[k].size());
  }
  ctx.stats()["mean_points"] = total / static_cast<double>(configs.size());
}

void run_simulate(const ExperimentConfig& cfg, RunContext& ctx) {
  ctx.set_stage("simulation");
  const DriftSpec spec = drift_spec(cfg);
  const auto trajs = map_seeds(cfg.seeds, cfg.threads, [&](std::uint64_t s) {
    return run_simulation(initial_state(cfg, s), spec, integrator_params(cfg, s), cfg.t_end, cfg.snapshot_every);
  });
  ctx.set_stage("writing");
  std::size_t rejected = 0;
  std::size_t collisions = 0;
  std::string first_failure;
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    std::ostringstream os;
    write_trajectory_jsonl(os, trajs[k]);
    ctx.write(fmt::format("trajectory_seed{}.jsonl", cfg.seeds[k]), os.str());
    const auto last = to_unlabeled(trajs[k]).back();
    ctx.write(fmt::format("final_seed{}.csv", cfg.seeds[k]), config_csv(last));
    rejected += trajs[k].rejected_steps;
    if (trajs[k].failed) {
      ++collisions;
      if (first_failure.empty()) first_failure = fmt::format("seed {}: {}", cfg.seeds[k], trajs[k].failure);
    }
  }
  ctx.stats()["rejected_steps"] = rejected;
  ctx.stats()["collision_errors"] = collisions;
  ctx.check("no_collision_errors", collisions == 0, fmt::format("{} of {} runs aborted", collisions, trajs.size()));
  if (!first_failure.empty()) {
    ctx.set_stage("simulation");
    throw CollisionError(first_failure, 0, 0, 0.0);
  }
}

void run_plural(const ExperimentConfig& cfg, RunContext& ctx) {
  ctx.set_stage("plural-diagnostic");
  const auto profiles = map_seeds(cfg.seeds, cfg.threads, [&](std::uint64_t s) {
    const auto config = sample_field(cfg, s);
    return plural_isde_diagnostic(config, nearest_to_origin(config), cfg.radii);
  });
  const auto curve = aggregate_gaps(profiles);
  ctx.set_stage("writing");
  std::ostringstream os;
  write_gap_csv(os, curve);
  ctx.write("gap_curve.csv", os.str());

  std::size_t last = 0;
  bool decreasing = true;
  for (std::size_t k = 0; k < curve.radii.size() && curve.radii[k] <= 20.0; ++k) {
    if (k > 0 && !(curve.mean[k] < curve.mean[k - 1])) decreasing = false;
    last = k;
  }
  const double ratio = curve.mean[last] / curve.mean.front();
  ctx.stats()["gap_ratio"] = ratio;
  ctx.stats()["gap_ratio_radii"] = {curve.radii.front(), curve.radii[last]};
  std::size_t mesoscopic = 0;
  for (const auto& s : profiles.front()) mesoscopic += s.mesoscopic ? 1 : 0;
  ctx.stats()["mesoscopic_radii_first_seed"] = mesoscopic;
  ctx.check("gap_mean_decreasing_to_r20", decreasing,
            fmt::format("mean gap from r={} to r={}: {:.6g} -> {:.6g} (ratio {:.4f})", curve.radii.front(),
                        curve.radii[last], curve.mean.front(), curve.mean[last], ratio));
}

void run_invariance(const ExperimentConfig& cfg, RunContext& ctx) {
  ctx.set_stage("simulation");
  const DriftSpec spec = drift_spec(cfg);
  const auto trajs = map_seeds(cfg.seeds, cfg.threads, [&](std::uint64_t s) {
    return run_simulation(initial_state(cfg, s), spec, integrator_params(cfg, s), cfg.t_end, cfg.snapshot_every);
  });
  std::size_t collisions = 0;
  std::size_t rejected = 0;
  for (const auto& t : trajs) {
    collisions += t.failed ? 1 : 0;
    rejected += t.rejected_steps;
  }
  ctx.stats()["rejected_steps"] = rejected;
  ctx.stats()["collision_errors"] = collisions;
  ctx.check("no_collision_errors", collisions == 0, fmt::format("{} of {} runs aborted", collisions, trajs.size()));
  if (collisions > 0) {
    for (std::size_t k = 0; k < trajs.size(); ++k) {
      if (trajs[k].failed) throw CollisionError(fmt::format("seed {}: {}", cfg.seeds[k], trajs[k].failure), 0, 0, 0.0);
    }
  }

  ctx.set_stage("estimation");
  InvarianceOptions opt;
  opt.bins = estimator_bins(cfg);
  opt.tolerance = cfg.tolerance;
  opt.z = cfg.z;
  opt.intensity = field_intensity(cfg);
  KernelModel model = KernelModel::ginibre();
  if (field_dim(cfg.field) == 2) {
    opt.sub_window = Disk{ginibre_sub_radius(cfg)};
  } else {
    model = KernelModel::sine();
    const double h = dyson_sub_half_width(cfg);
    opt.sub_window = Interval{-h, h};
    const double fraction = cfg.bulk_fraction;
    opt.preprocess = [fraction](const Configuration& c) {
      std::vector<double> xs;
      xs.reserve(c.points.size());
      for (const Vec2 p : c.points) xs.push_back(p.x);
      std::sort(xs.begin(), xs.end());
      return unfold_bulk(xs, fraction);
    };
  }
  const auto report = invariance_report(trajs, model, opt);

  ctx.set_stage("writing");
  if (cfg.save_trajectories) {
    for (std::size_t k = 0; k < trajs.size(); ++k) {
      std::ostringstream os;
      write_trajectory_jsonl(os, trajs[k]);
      ctx.write(fmt::format("trajectory_seed{}.jsonl", cfg.seeds[k]), os.str());
    }
  }
  ctx.write("report.txt", report.to_text());
  ctx.write("report.json", report.to_json() + "\n");
  ctx.stats()["max_dev_late_closed"] = report.max_dev_late_closed;
  ctx.stats()["max_dev_early_closed"] = report.max_dev_early_closed;
  ctx.stats()["max_z_early_late"] = report.max_z_early_late;
  ctx.check("late_vs_closed_form", report.pass_late_closed,
            fmt::format("max |g_late - g_closed| = {:.6f} < {}", report.max_dev_late_closed, report.tolerance));
  ctx.check("early_vs_late", report.pass_early_late,
            fmt::format("max z = {:.3f} <= {}", report.max_z_early_late, report.z));
}

void run_spacing(const ExperimentConfig& cfg, RunContext& ctx) {
  ctx.set_stage("sampling");
  const Bins bins = estimator_bins(cfg);
  const auto hists = map_seeds(cfg.seeds, cfg.threads,
                               [&](std::uint64_t s) { return spacing_distribution(sample_field(cfg, s), bins); });
  const auto band = histogram_band(hists);
  std::vector<std::uint64_t> counts(bins.size(), 0);
  std::uint64_t gaps = 0;
  double gap_sum = 0.0;
  for (const auto& h : hists) {
    for (std::size_t b = 0; b < counts.size(); ++b) counts[b] += h.counts[b];
    gaps += h.gaps;
    gap_sum += h.mean_gap * static_cast<double>(h.gaps);
  }
  SpacingHistogram pooled;
  pooled.edges = bins.edges;
  pooled.counts = counts;
  pooled.gaps = gaps;
  const double small = mass_below(pooled, cfg.small_gap);
  const double poisson_small = 1.0 - std::exp(-cfg.small_gap);

  ctx.set_stage("writing");
  std::string csv = "s_lo,s_hi,density,count,stderr\n";
  for (std::size_t b = 0; b < bins.size(); ++b) {
    csv += fmt::format("{},{},{},{},{}\n", num(bins.edges[b]), num(bins.edges[b + 1]), num(band.mean[b]), counts[b],
                       num(band.std_error[b]));
  }
  ctx.write("spacing.csv", csv);
  ctx.stats()["mean_gap"] = gap_sum / static_cast<double>(gaps);
  ctx.stats()["small_gap_mass"] = small;
  ctx.stats()["poisson_small_gap_mass"] = poisson_small;
  const double factor = small > 0.0 ? poisson_small / small : INFINITY;
  ctx.check("small_gap_suppression", factor > 3.0,
            fmt::format("mass on [0,{}] = {:.6f}, Poisson {:.6f}, factor {:.3f} > 3", cfg.small_gap, small, poisson_small,
                        factor));
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::json& m) {
  std::ofstream f(dir / kManifestName, std::ios::trunc);
  f << m.dump(2) << "\n";
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Sample:
      return "sample";
    case ExperimentKind::Simulate:
      return "simulate";
    case ExperimentKind::PluralDiagnostic:
      return "plural-diagnostic";
    case ExperimentKind::Invariance:
      return "invariance";
    case ExperimentKind::Spacing:
      return "spacing";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto k : {ExperimentKind::Sample, ExperimentKind::Simulate, ExperimentKind::PluralDiagnostic,
                 ExperimentKind::Invariance, ExperimentKind::Spacing}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError(fmt::format("unknown experiment kind '{}'", name));
}

std::vector<std::uint64_t> parse_seeds(std::string_view text) {
  const std::string t = trim(text);
  if (t.find(',') == std::string::npos) {
    const auto count = to_integer<std::uint64_t>("seeds", t);
    if (count == 0) throw ConfigError("seeds: count must be positive");
    std::vector<std::uint64_t> out(count);
    for (std::uint64_t k = 0; k < count; ++k) out[k] = k;
    return out;
  }
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(t)) out.push_back(to_integer<std::uint64_t>("seeds", item));
  if (out.empty()) throw ConfigError("seeds: empty list");
  return out;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (field != "ginibre" && field != "dyson" && field != "poisson" && field != "poisson1d") {
    fail(fmt::format("model.field must be one of ginibre, dyson, poisson, poisson1d; got '{}'", field));
  }
  try {
    SamplerParams{n, beta, 0, bulk_fraction}.validate();
    drift_spec(*this).validate();
    IntegratorParams p = integrator_params(*this, 0);
    p.validate();
    estimator_bins(*this).validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(fmt::format("invalid configuration: {}", e.what()));
  }
  if (intensity < 0.0 || !std::isfinite(intensity)) fail("model.intensity must be >= 0 (0 selects the default)");
  if (!(t_end >= 0.0)) fail("integrator.t_end must be >= 0");
  if (!(snapshot_every > 0.0)) fail("integrator.snapshot_every must be positive");
  if (!(tolerance > 0.0)) fail("estimator.tolerance must be positive");
  if (!(z > 0.0)) fail("estimator.z must be positive");
  if (sub_window < 0.0) fail("estimator.sub_window must be >= 0 (0 selects the default)");
  if (seeds.empty()) fail("run.seeds must not be empty");
  if (threads == 0) fail("run.threads must be >= 1");
  if (out.empty()) fail("run.out (or --out) must name an output directory");

  switch (kind) {
    case ExperimentKind::Sample:
    case ExperimentKind::Simulate:
      break;
    case ExperimentKind::PluralDiagnostic:
      if (field != "ginibre" && field != "poisson") fail("plural-diagnostic needs model.field = ginibre or poisson");
      if (radii.empty()) fail("diagnostic.radii must not be empty");
      for (std::size_t k = 0; k < radii.size(); ++k) {
        if (!(radii[k] > 0.0) || (k > 0 && !(radii[k] > radii[k - 1]))) {
          fail("diagnostic.radii must be positive and strictly increasing");
        }
      }
      break;
    case ExperimentKind::Invariance:
      if (field != "ginibre" && field != "dyson") fail("invariance needs model.field = ginibre or dyson");
      if (seeds.size() < 2) fail("invariance needs at least 2 seeds for between-seed standard errors");
      if (field == "ginibre" && !(ginibre_sub_radius(*this) > 0.0 &&
                                  ginibre_sub_radius(*this) + r_max <= std::sqrt(static_cast<double>(n)))) {
        fail(fmt::format("estimator sub-window radius {} leaves no margin r_max = {} inside disk(sqrt(n))",
                         ginibre_sub_radius(*this), r_max));
      }
      if (field == "dyson" && !(dyson_sub_half_width(*this) > 0.0 &&
                                dyson_sub_half_width(*this) + r_max <= 0.5 * static_cast<double>(bulk_count(*this)))) {
        fail(fmt::format("estimator sub-window half-width {} leaves no margin r_max = {} inside the unfolded bulk",
                         dyson_sub_half_width(*this), r_max));
      }
      break;
    case ExperimentKind::Spacing: {
      if (field != "dyson" && field != "poisson1d") fail("spacing needs model.field = dyson or poisson1d");
      const auto edges = estimator_bins(*this).edges;
      if (std::find(edges.begin(), edges.end(), small_gap) == edges.end()) {
        fail(fmt::format("estimator.small_gap = {} must coincide with a bin edge", small_gap));
      }
      break;
    }
  }
}

std::string ExperimentConfig::to_ini() const {
  std::string s;
  s += fmt::format("[experiment]\nkind = {}\n\n", to_string(kind));
  s += fmt::format("[model]\nfield = {}\nn = {}\nbeta = {}\nintensity = {}\nbulk_fraction = {}\n\n", field, n, beta,
                   num(field_intensity(*this)), num(bulk_fraction));
  s += fmt::format("[drift]\nrepresentation = {}\nradius = {}\nconfinement = {}\n\n", representation, num(radius),
                   num(drift_spec(*this).confinement_coefficient));
  s += fmt::format(
      "[integrator]\ndt = {}\nmin_dt = {}\nguard_distance = {}\nmax_substep_depth = {}\nt_end = {}\n"
      "snapshot_every = {}\n\n",
      num(dt), num(min_dt > 0.0 ? min_dt : dt / 1024.0), num(guard_distance), max_substep_depth, num(t_end),
      num(snapshot_every));
  std::string r;
  for (std::size_t k = 0; k < radii.size(); ++k) r += (k ? "," : "") + num(radii[k]);
  s += fmt::format("[diagnostic]\nradii = {}\n\n", r);
  s += fmt::format("[estimator]\nbins = {}\nr_max = {}\nsub_window = {}\ntolerance = {}\nz = {}\nsmall_gap = {}\n\n",
                   bins, num(r_max), num(sub_window), num(tolerance), num(z), num(small_gap));
  std::string sd;
  for (std::size_t k = 0; k < seeds.size(); ++k) sd += (k ? "," : "") + std::to_string(seeds[k]);
  if (seeds.size() == 1) sd += ",";
  s += fmt::format("[run]\nseeds = {}\nthreads = {}\nsave_trajectories = {}\n", sd, threads, save_trajectories);
  return s;
}

ExperimentConfig resolve_config(ExperimentKind kind, const std::optional<std::filesystem::path>& config_file,
                                const std::vector<std::string>& overrides, const std::optional<std::string>& seeds,
                                const std::optional<std::filesystem::path>& out) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  if (config_file) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(config_file->string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(fmt::format("cannot read config file: {}", e.what()));
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError(fmt::format("config key '{}' must live inside a [section]", section));
      if (section == "experiment") continue;
      for (const auto& [key, value] : body) apply_setting(cfg, section + "." + key, value.data());
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", o));
    apply_setting(cfg, trim(std::string_view(o).substr(0, eq)), std::string(o.substr(eq + 1)));
  }
  if (seeds) cfg.seeds = parse_seeds(*seeds);
  if (out) cfg.out = *out;
  return cfg;
}

int run_experiment(const ExperimentConfig& config, std::ostream& log) {
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  RunContext ctx(config);

  try {
    config.validate();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    if (!config.out.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(config.out, ec);
      if (!ec) {
        ctx.set_stage("validation");
        write_manifest(config.out, ctx.manifest("invalid-config", e.what(), wall(), started));
      }
    }
    return kExitInvalidConfig;
  }

  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) {
    log << "config error: cannot create output directory " << config.out.string() << ": " << ec.message() << "\n";
    return kExitInvalidConfig;
  }

  try {
    ctx.set_stage("writing");
    ctx.write("resolved_config.ini", config.to_ini());
    switch (config.kind) {
      case ExperimentKind::Sample:
        run_sample(config, ctx);
        break;
      case ExperimentKind::Simulate:
        run_simulate(config, ctx);
        break;
      case ExperimentKind::PluralDiagnostic:
        run_plural(config, ctx);
        break;
      case ExperimentKind::Invariance:
        run_invariance(config, ctx);
        break;
      case ExperimentKind::Spacing:
        run_spacing(config, ctx);
        break;
    }
  } catch (const std::exception& e) {
    log << "compute error during " << ctx.stage() << ": " << e.what() << "\n";
    write_manifest(config.out, ctx.manifest("failed", e.what(), wall(), started));
    return kExitComputeFailure;
  }
  write_manifest(config.out, ctx.manifest("ok", "", wall(), started));
  return kExitOk;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(fmt::format("cannot open {}", path.string()));
  std::ostringstream os;
  os << f.rdbuf();
  return sha256_hex(os.str());
}

int summarize(const std::filesystem::path& dir, std::ostream& out) {
  nlohmann::json m;
  try {
    std::ifstream f(dir / kManifestName);
    if (!f) {
      out << "manifest error: no " << kManifestName << " in " << dir.string() << "\n";
      return kExitComputeFailure;
    }
    m = nlohmann::json::parse(f);
    (void)m.at("experiment").get<std::string>();
    (void)m.at("status").get<std::string>();
    (void)m.at("files").size();
  } catch (const nlohmann::json::exception& e) {
    out << "manifest error: corrupt " << kManifestName << ": " << e.what() << "\n";
    return kExitComputeFailure;
  }

  fmt::print(out, "experiment: {}  status: {}  seeds: {}\n", m["experiment"].get<std::string>(),
             m["status"].get<std::string>(), m.value("seeds", nlohmann::json::array()).size());
  if (m.contains("failure")) {
    fmt::print(out, "failure at {}: {}\n", m["failure"].value("stage", "?"), m["failure"].value("message", "?"));
  }

  bool intact = true;
  for (const auto& file : m["files"]) {
    const auto name = file.value("path", "");
    const auto expected = file.value("sha256", "");
    std::string actual;
    try {
      actual = sha256_file(dir / name);
    } catch (const Error&) {
      fmt::print(out, "INTEGRITY FAIL {}: file missing\n", name);
      intact = false;
      continue;
    }
    if (actual != expected) {
      fmt::print(out, "INTEGRITY FAIL {}: checksum mismatch (manifest {}, file {})\n", name, expected, actual);
      intact = false;
    }
  }
  if (intact) fmt::print(out, "integrity: {} file(s) verified\n", m["files"].size());

  for (const auto& c : m.value("checks", nlohmann::json::array())) {
    fmt::print(out, "{} {}: {}\n", c.value("pass", false) ? "PASS" : "FAIL", c.value("name", "?"), c.value("detail", ""));
  }
  const auto stats = m.value("stats", nlohmann::json::object());
  for (const auto& [key, value] : stats.items()) {
    fmt::print(out, "stat {} = {}\n", key, value.dump());
  }
  return intact ? kExitOk : kExitComputeFailure;
}

}  // namespace isde
