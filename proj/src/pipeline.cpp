#include "hemopar/pipeline.hpp"

#include <algorithm>
#include <exception>

#include "hemopar/glm.hpp"
#include "hemopar/io.hpp"
#include "hemopar/rng.hpp"
#include "hemopar/simgen.hpp"

namespace hemopar {

using nlohmann::ordered_json;

Stage parse_stage(const std::string& name) {
  if (name == "simulate") return Stage::simulate;
  if (name == "features") return Stage::features;
  if (name == "parcellate") return Stage::parcellate;
  if (name == "refit") return Stage::refit;
  if (name == "mc") return Stage::mc;
  if (name == "all") return Stage::all;
  throw ConfigError("unknown stage '" + name + "'");
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::simulate: return "simulate";
    case Stage::features: return "features";
    case Stage::parcellate: return "parcellate";
    case Stage::refit: return "refit";
    case Stage::mc: return "mc";
    case Stage::all: return "all";
  }
  return "?";
}

namespace {

std::uint64_t effective_seed(const ExperimentConfig& config, const PipelineOptions& options) {
  return options.seed.value_or(config.base_seed);
}

void say(const PipelineOptions& options, const std::string& msg) {
  if (options.log) *options.log << msg << '\n';
}

// Files of a directory (recursively) or the file itself, in sorted order.
std::vector<fs::path> artifact_files(const fs::path& p) {
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::recursive_directory_iterator(p))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(p);
  }
  return files;
}

class Manifest {
public:
  Manifest(std::string stage, const ExperimentConfig& config, std::uint64_t seed, fs::path path)
      : stage_(std::move(stage)), config_(config), seed_(seed), path_(std::move(path)) {}

  void parameter(const std::string& key, ordered_json value) { params_[key] = std::move(value); }
  void input(const fs::path& p) { add(inputs_, p); }
  void output(const fs::path& p) { add(outputs_, p); }

  void write() const {
    ordered_json j;
    j["stage"] = stage_;
    j["tool"] = "hemopar";
    j["tool_version"] = kToolVersion;
    j["seed"] = seed_;
    j["parameters"] = params_.is_null() ? ordered_json::object() : params_;
    j["config"] = to_json(config_);
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    write_text(path_, j.dump(2) + "\n");
  }

private:
  void add(ordered_json& list, const fs::path& p) {
    if (list.is_null()) list = ordered_json::array();
    const fs::path base = fs::weakly_canonical(fs::absolute(path_).parent_path());
    for (const auto& f : artifact_files(p)) {
      if (fs::weakly_canonical(fs::absolute(f)) == fs::weakly_canonical(fs::absolute(path_))) continue;
      const fs::path rel = fs::weakly_canonical(fs::absolute(f)).lexically_relative(base);
      list.push_back({{"path", rel.generic_string()}, {"sha256", sha256_file(f)}});
    }
  }

  std::string stage_;
  const ExperimentConfig& config_;
  std::uint64_t seed_;
  fs::path path_;
  ordered_json params_;
  ordered_json inputs_ = ordered_json::array();
  ordered_json outputs_ = ordered_json::array();
};

fs::path parent_or_dot(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

void require(const fs::path& p, const std::string& what, const std::string& upstream) {
  if (!fs::exists(p))
    throw DataError("missing " + what + " at " + p.string() + "; run the `" + upstream + "` stage first");
}

}  // namespace

void simulate_stage(const ExperimentConfig& config, const fs::path& dataset_dir, const PipelineOptions& options) {
  config.validate();
  const std::uint64_t seed = effective_seed(config, options);
  say(options, "simulate: seed " + std::to_string(seed) + ", noise variance " + format_double(config.noise_variance));
  const Phantom ph = make_phantom(config.phantom, config.paradigm.resolve(), derive_seed(seed, {1}));
  const Dataset ds = synthesize_dataset(ph.grid, ph.truth, ph.paradigm, config.drift, config.noise_variance,
                                        derive_seed(seed, {2}), options.exec);
  fs::create_directories(dataset_dir);
  const fs::path manifest_path = dataset_dir / "manifest_simulate.json";
  if (fs::exists(manifest_path)) fs::remove(manifest_path);
  write_dataset(ds, config.phantom, dataset_dir);
  Manifest m("simulate", config, seed, manifest_path);
  m.output(dataset_dir);
  m.write();
}

void features_stage(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& features_csv,
                    const PipelineOptions& options) {
  config.validate();
  require(dataset_dir / kDatasetSidecar, "dataset", "simulate");
  const Dataset ds = read_dataset(dataset_dir);
  say(options, "features: " + std::to_string(ds.grid.size()) + " voxels x " + std::to_string(ds.paradigm.n_scans) +
                   " scans");
  const HrfBasis basis = canonical_hrf_basis(ds.paradigm.tr, ds.paradigm.dt, config.glm.hrf_duration);
  const DesignMatrix design = build_glm_design(ds.paradigm, basis, config.glm.drift_order);
  const FeatureMap fm = extract_features(ds, design, options.exec);
  write_features(fm, features_csv);
  Manifest m("features", config, ds.seed, parent_or_dot(features_csv) / "manifest_features.json");
  m.input(dataset_dir);
  m.output(features_csv);
  m.write();
}

void parcellate_stage(const ExperimentConfig& config, Method method, std::size_t parcels,
                      const fs::path& features_csv, const fs::path& labels_csv,
                      const std::optional<fs::path>& merge_log, const PipelineOptions& options) {
  config.validate();
  require(features_csv, "features", "features");
  const FeatureMap fm = read_features(features_csv);
  say(options, "parcellate: " + to_string(method) + " down to " + std::to_string(parcels) + " parcels");
  std::vector<MergeRecord> log;
  const ParcelState state = parcellate(method, fm, parcels, {options.exec, merge_log ? &log : nullptr});
  write_labels(fm.grid, state.compact_labels(), labels_csv);
  if (merge_log) write_merge_log(log, method, *merge_log);
  Manifest m("parcellate", config, effective_seed(config, options),
             parent_or_dot(labels_csv) / ("manifest_parcellate_" + to_string(method) + ".json"));
  m.parameter("method", to_string(method));
  m.parameter("parcels", parcels);
  m.input(features_csv);
  m.output(labels_csv);
  if (merge_log) m.output(*merge_log);
  m.write();
}

void refit_stage(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& labels_csv,
                 const fs::path& out_dir, const PipelineOptions& options) {
  config.validate();
  require(dataset_dir / kDatasetSidecar, "dataset", "simulate");
  require(labels_csv, "labels", "parcellate");
  const Dataset ds = read_dataset(dataset_dir);
  const Labels labels = read_labels(ds.grid, labels_csv);
  say(options, "refit: " + labels_csv.string());
  const HrfRefit refit = als_hrf_refit(ds, labels, config.refit_options(), options.exec);
  const fs::path manifest_path = out_dir / "manifest_refit.json";
  if (fs::exists(manifest_path)) fs::remove(manifest_path);
  write_refit(refit, ds.grid, out_dir);
  Manifest m("refit", config, ds.seed, manifest_path);
  m.input(dataset_dir);
  m.input(labels_csv);
  m.output(out_dir);
  m.write();
}

McReport mc_stage(const ExperimentConfig& config, const fs::path& report_json, const PipelineOptions& options) {
  config.validate();
  McConfig mc = config.mc_config();
  mc.base_seed = effective_seed(config, options);
  mc.record_timing = options.record_timing;
  say(options, "mc: " + std::to_string(mc.runs) + " runs x " + std::to_string(mc.noise_grid.size()) +
                   " noise levels, base seed " + std::to_string(mc.base_seed));
  const McReport report = monte_carlo(mc, options.exec);
  fs::path report_csv = report_json;
  report_csv.replace_extension(".csv");
  write_text(report_json, report_to_json(report).dump(2) + "\n");
  write_text(report_csv, report_to_csv(report));
  Manifest m("mc", config, mc.base_seed, parent_or_dot(report_json) / "manifest_mc.json");
  m.parameter("record_timing", options.record_timing);
  m.output(report_json);
  m.output(report_csv);
  m.write();
  return report;
}

void execute_stage(const ExperimentConfig& config, Stage stage, const fs::path& out_dir,
                   const PipelineOptions& options) {
  config.validate();
  fs::create_directories(out_dir);
  const fs::path dataset = out_dir / "dataset";
  const fs::path features = out_dir / "features.csv";
  auto labels = [&](Method m) { return out_dir / ("labels_" + to_string(m) + ".csv"); };
  auto merges = [&](Method m) { return out_dir / ("merges_" + to_string(m) + ".jsonl"); };
  auto refit_dir = [&](Method m) { return out_dir / ("refit_" + to_string(m)); };

  switch (stage) {
    case Stage::simulate:
      simulate_stage(config, dataset, options);
      break;
    case Stage::features:
      features_stage(config, dataset, features, options);
      break;
    case Stage::parcellate:
      parcellate_stage(config, config.method, config.parcels, features, labels(config.method),
                       merges(config.method), options);
      break;
    case Stage::refit:
      refit_stage(config, dataset, labels(config.method), refit_dir(config.method), options);
      break;
    case Stage::mc:
      mc_stage(config, out_dir / "report.json", options);
      break;
    case Stage::all:
      simulate_stage(config, dataset, options);
      features_stage(config, dataset, features, options);
      for (Method m : {Method::sw, Method::igmm}) {
        parcellate_stage(config, m, config.parcels, features, labels(m), merges(m), options);
        refit_stage(config, dataset, labels(m), refit_dir(m), options);
      }
      mc_stage(config, out_dir / "report.json", options);
      break;
  }
}

ExitCode exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return ExitCode::config;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return ExitCode::data;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return ExitCode::data;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return ExitCode::numerical;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    return ExitCode::numerical;
  }
}

ExitCode run_pipeline(const ExperimentConfig& config, Stage stage, const fs::path& out_dir,
                      const PipelineOptions& options, std::ostream& err) {
  try {
    execute_stage(config, stage, out_dir, options);
    return ExitCode::ok;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

}  // namespace hemopar
