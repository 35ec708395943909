#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hemopar/eval.hpp"
#include "hemopar/parcellation.hpp"
#include "hemopar/simgen.hpp"

namespace hemopar {

inline constexpr int kConfigVersion = 1;

struct ParadigmGenerator {
  int conditions = 1;
  double isi_min = 3.0;
  double isi_max = 7.0;
  double first_onset = 2.0;
  std::uint64_t seed = 2015;
  bool operator==(const ParadigmGenerator&) const = default;
};

// Either explicit onsets or a generator; the generator wins when both are set.
struct ParadigmConfig {
  int n_scans = 500;
  double tr = 1.0;
  double dt = 0.5;
  std::vector<std::vector<double>> onsets;
  std::optional<ParadigmGenerator> generator = ParadigmGenerator{};

  Paradigm resolve() const;
  bool operator==(const ParadigmConfig&) const = default;
};

struct RefitConfig {
  int max_iters = 50;
  double tol = 1e-10;
  double hrf_duration = 25.0;
  bool operator==(const RefitConfig&) const = default;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  PhantomSpec phantom = default_phantom_spec();
  ParadigmConfig paradigm;
  DriftSpec drift;
  double noise_variance = 1.5;
  std::vector<double> noise_grid{0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0};
  GlmSpec glm;
  Method method = Method::igmm;
  std::size_t parcels = 4;
  RefitConfig refit;
  int runs = 100;
  std::uint64_t base_seed = 2015;

  void validate() const;
  RefitOptions refit_options() const;
  McConfig mc_config() const;
  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::ordered_json to_json(const ExperimentConfig& config);

// Strict parse: unknown keys and type mismatches raise ConfigError naming the
// offending field path (e.g. "paradigm.tr").
ExperimentConfig config_from_json(const nlohmann::json& doc);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

}  // namespace hemopar
