#pragma once

#include "contextprobe/config.hpp"
#include "contextprobe/model.hpp"
#include "contextprobe/report.hpp"
#include "contextprobe/scenegen.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace contextprobe {

struct TrainStats {
  double final_loss = 0.0;
  LossBreakdown final_parts;
  int epochs_run = 0;
};

struct RunRecord {
  std::string config_hash;
  std::string checkpoint_path;
  std::uint64_t seed = 0;
  double wall_clock_sec = 0.0;
  double final_loss = 0.0;
};

/// Trains per the configured mode on the configured split; deterministic in
/// (config, dataset). Throws std::runtime_error on divergence.
std::pair<ParamVec, TrainStats> train_model(const ExperimentConfig& cfg,
                                            const Dataset& ds);

/// Builds edited sets plus flipped-mask controls for every scene, fills the
/// score table / prediction rasters and assembles the report. Read-only on
/// model and dataset.
RobustnessReport audit_model(const ExperimentConfig& cfg, const ParamVec& params,
                             const Dataset& ds,
                             std::optional<double> alpha_override = {});

Dataset cmd_gen(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

RunRecord cmd_train(const ExperimentConfig& cfg,
                    const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& out_dir);

RobustnessReport cmd_audit(const ExperimentConfig& cfg,
                           const std::filesystem::path& checkpoint,
                           const std::filesystem::path& dataset_dir,
                           std::optional<double> alpha_override,
                           const std::filesystem::path& out_dir,
                           bool dump_edits = false);

void cmd_report(const std::filesystem::path& report_json,
                const std::string& format,
                const std::filesystem::path& out_dir);

/// CLI entry point (gen | train | audit | report). Returns the process exit
/// code; on failure prints one machine-readable JSON error line to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace contextprobe
