#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "hemopar/config.hpp"
#include "hemopar/errors.hpp"
#include "hemopar/eval.hpp"
#include "hemopar/execution.hpp"

namespace hemopar {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

enum class Stage { simulate, features, parcellate, refit, mc, all };
Stage parse_stage(const std::string& name);
std::string to_string(Stage stage);

struct PipelineOptions {
  Execution exec = Execution::parallel;
  std::optional<std::uint64_t> seed;   // overrides config.base_seed
  bool record_timing = false;          // wall-clock in the MC report (breaks byte identity)
  std::ostream* log = nullptr;         // progress messages when set
};

// Individual stages with explicit paths. Each writes manifest_<tag>.json next
// to its outputs (inside the output directory for directory outputs).
void simulate_stage(const ExperimentConfig& config, const fs::path& dataset_dir, const PipelineOptions& options);
void features_stage(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& features_csv,
                    const PipelineOptions& options);
void parcellate_stage(const ExperimentConfig& config, Method method, std::size_t parcels,
                      const fs::path& features_csv, const fs::path& labels_csv,
                      const std::optional<fs::path>& merge_log, const PipelineOptions& options);
void refit_stage(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& labels_csv,
                 const fs::path& out_dir, const PipelineOptions& options);
McReport mc_stage(const ExperimentConfig& config, const fs::path& report_json, const PipelineOptions& options);

// Runs one stage (or all of them) with the conventional layout under out_dir:
//   dataset/  features.csv  labels_<method>.csv  merges_<method>.jsonl
//   refit_<method>/  report.json  report.csv
// Stages read upstream artifacts from out_dir; a missing one raises DataError
// naming the stage to run first.
void execute_stage(const ExperimentConfig& config, Stage stage, const fs::path& out_dir,
                   const PipelineOptions& options);

// execute_stage with errors mapped to exit codes and reported on `err`.
ExitCode run_pipeline(const ExperimentConfig& config, Stage stage, const fs::path& out_dir,
                      const PipelineOptions& options, std::ostream& err);

// Exit code for the exception currently being handled.
ExitCode exit_code_for_current_exception(std::ostream& err);

}  // namespace hemopar
