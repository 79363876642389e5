// isde-lab: reproducible experiments on finite-N Coulomb and log-gas dynamics.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "isde/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Finite-N laboratory for Ginibre and Dyson interacting Brownian particles"};
  app.require_subcommand(1);

  struct Common {
    std::optional<std::string> config;
    std::vector<std::string> overrides;
    std::optional<std::string> out;
    std::optional<std::string> seeds;
  };
  std::vector<std::pair<isde::ExperimentKind, CLI::App*>> experiments;
  Common common;

  for (auto kind : {isde::ExperimentKind::Sample, isde::ExperimentKind::Simulate,
                    isde::ExperimentKind::PluralDiagnostic, isde::ExperimentKind::Invariance,
                    isde::ExperimentKind::Spacing}) {
    auto* sub = app.add_subcommand(std::string(isde::to_string(kind)));
    sub->add_option("--config", common.config, "key = value config file with [sections]");
    sub->add_option("--set", common.overrides, "override section.key=value (repeatable)");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seeds", common.seeds, "seed count N (seeds 0..N-1) or comma list");
    experiments.emplace_back(kind, sub);
  }

  std::string summary_dir;
  auto* summary = app.add_subcommand("summarize", "verify and print the checks of a finished run");
  summary->add_option("dir", summary_dir, "output directory of a run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : isde::kExitInvalidConfig;
  }

  if (summary->parsed()) return isde::summarize(summary_dir, std::cout);

  for (const auto& [kind, sub] : experiments) {
    if (!sub->parsed()) continue;
    isde::ExperimentConfig config;
    try {
      std::optional<std::filesystem::path> config_path;
      if (common.config) config_path = *common.config;
      std::optional<std::filesystem::path> out;
      if (common.out) out = *common.out;
      config = isde::resolve_config(kind, config_path, common.overrides, common.seeds, out);
    } catch (const isde::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return isde::kExitInvalidConfig;
    }
    const int status = isde::run_experiment(config, std::cerr);
    if (status == isde::kExitOk) std::cerr << "wrote " << config.out.string() << "\n";
    return status;
  }
  return isde::kExitInvalidConfig;
}
