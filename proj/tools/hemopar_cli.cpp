#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "hemopar/config.hpp"
#include "hemopar/errors.hpp"
#include "hemopar/execution.hpp"
#include "hemopar/pipeline.hpp"

using namespace hemopar;

int main(int argc, char** argv) {
  CLI::App app{"Hemodynamically informed parcellation of synthetic fMRI data"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool verbose = false;
  bool timing = false;
  app.add_option("--config", config_path, "Experiment config (JSON); built-in defaults when omitted")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output path (directory or file, depending on the subcommand)");
  app.add_option("--seed", seed, "Seed overriding the config's base_seed");
  app.add_option("--threads", threads, "OpenMP threads (0 = machine default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose,-v", verbose, "Print stage progress to stderr");
  app.add_flag("--timing", timing, "Record wall-clock timing in Monte Carlo reports");

  auto* simulate = app.add_subcommand("simulate", "Generate a phantom dataset into the --out directory");

  auto* features = app.add_subcommand("features", "Fit the GLM and write per-voxel features");
  std::string data_dir = "dataset";
  features->add_option("--data", data_dir, "Dataset directory");

  auto* parcellate = app.add_subcommand("parcellate", "Agglomerate voxels into parcels");
  std::string features_csv = "features.csv";
  std::optional<std::string> method_name;
  std::optional<std::size_t> k;
  std::optional<std::string> merge_log;
  parcellate->add_option("--features", features_csv, "Features CSV");
  parcellate->add_option("--method", method_name, "igmm or sw (default from config)")
      ->check(CLI::IsMember({"igmm", "sw"}));
  parcellate->add_option("--k", k, "Target parcel count (default from config)")->check(CLI::PositiveNumber);
  parcellate->add_option("--merge-log", merge_log, "Write the merge sequence as JSON lines");

  auto* refit = app.add_subcommand("refit", "Parcel-wise HRF and amplitude refit");
  std::string labels_csv;
  refit->add_option("--data", data_dir, "Dataset directory");
  refit->add_option("--labels", labels_csv, "Labels CSV")->required();

  auto* mc = app.add_subcommand("mc", "Monte Carlo comparison of IGMM and spatial Ward");
  std::optional<int> runs;
  std::optional<std::uint64_t> base_seed;
  mc->add_option("--runs", runs, "Runs per noise level")->check(CLI::PositiveNumber);
  mc->add_option("--base-seed", base_seed, "Base seed of the run grid");

  auto* all = app.add_subcommand("all", "Run every stage into the --out directory");
  auto* print_config = app.add_subcommand("print-config", "Write the effective config as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::config);
  }

  try {
    set_thread_count(threads);
    ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (runs) config.runs = *runs;
    config.validate();

    PipelineOptions options;
    options.seed = base_seed ? base_seed : seed;
    options.record_timing = timing;
    if (verbose) options.log = &std::cerr;

    if (*simulate) {
      simulate_stage(config, out.empty() ? "dataset" : out, options);
    } else if (*features) {
      features_stage(config, data_dir, out.empty() ? "features.csv" : out, options);
    } else if (*parcellate) {
      const Method method = method_name ? parse_method(*method_name) : config.method;
      const std::string dest = out.empty() ? "labels_" + to_string(method) + ".csv" : out;
      parcellate_stage(config, method, k.value_or(config.parcels), features_csv, dest,
                       merge_log ? std::optional<fs::path>(*merge_log) : std::nullopt, options);
    } else if (*refit) {
      refit_stage(config, data_dir, labels_csv, out.empty() ? "refit" : out, options);
    } else if (*mc) {
      mc_stage(config, out.empty() ? "report.json" : out, options);
    } else if (*all) {
      execute_stage(config, Stage::all, out.empty() ? "out" : out, options);
    } else if (*print_config) {
      if (options.seed) config.base_seed = *options.seed;
      if (out.empty()) std::cout << to_json(config).dump(2) << '\n';
      else save_config(config, out);
    }
    return static_cast<int>(ExitCode::ok);
  } catch (...) {
    return static_cast<int>(exit_code_for_current_exception(std::cerr));
  }
}
