#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isde/errors.hpp"

namespace isde {

/// Raised while resolving or validating an experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ExperimentKind { Sample, Simulate, PluralDiagnostic, Invariance, Spacing };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

/// Exit statuses of run_experiment and summarize.
inline constexpr int kExitOk = 0;
inline constexpr int kExitComputeFailure = 1;
inline constexpr int kExitInvalidConfig = 2;

/// Fully resolved experiment settings. Every field has a default; a config
/// file and `section.key=value` overrides replace them.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Sample;

  // [model]
  std::string field = "ginibre";  // ginibre | dyson | poisson | poisson1d
  std::size_t n = 100;
  int beta = 2;
  double intensity = 0.0;  // 0 selects the field's natural intensity
  double bulk_fraction = 0.2;

  // [drift]
  std::string representation = "origin";  // full | particle | origin
  double radius = 1.0e6;
  std::optional<double> confinement;  // unset selects the reversible coefficient

  // [integrator]
  double dt = 5e-4;
  double min_dt = 0.0;  // 0 selects dt / 1024
  double guard_distance = 1e-6;
  int max_substep_depth = 10;
  double t_end = 1.0;
  double snapshot_every = 0.05;

  // [diagnostic]
  std::vector<double> radii = {5.0, 10.0, 15.0, 20.0, 30.0};

  // [estimator]
  std::size_t bins = 40;
  double r_max = 4.0;
  double sub_window = 0.0;  // 0 selects the widest window with a 3-unit guard band
  double tolerance = 0.05;
  double z = 3.0;
  double small_gap = 0.2;

  // [run]
  std::vector<std::uint64_t> seeds = {0};
  std::size_t threads = 1;
  bool save_trajectories = false;
  std::filesystem::path out;

  /// Checks every module precondition reachable from these settings.
  void validate() const;

  /// Canonical `key = value` text with one section per group.
  std::string to_ini() const;
};

/// Parses the `--seeds` argument: a bare integer N means seeds 0..N-1, a
/// comma-separated list (a trailing comma allowed) means exactly those seeds.
std::vector<std::uint64_t> parse_seeds(std::string_view text);

/// Defaults, then the optional config file, then `--set` overrides in order,
/// then the explicit seeds and output directory. Throws ConfigError.
ExperimentConfig resolve_config(ExperimentKind kind, const std::optional<std::filesystem::path>& config_file,
                                const std::vector<std::string>& overrides, const std::optional<std::string>& seeds,
                                const std::optional<std::filesystem::path>& out);

/// Runs the experiment, writes data artifacts and manifest.json into
/// config.out, and returns an exit status. Diagnostics go to `log`.
int run_experiment(const ExperimentConfig& config, std::ostream& log);

/// Prints the embedded checks and statistics of a finished run after
/// verifying the manifest checksums. Returns kExitOk only when the manifest
/// is intact and every file matches its checksum.
int summarize(const std::filesystem::path& dir, std::ostream& out);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace isde
