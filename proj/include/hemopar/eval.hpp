#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hemopar/execution.hpp"
#include "hemopar/glm.hpp"
#include "hemopar/parcellation.hpp"
#include "hemopar/simgen.hpp"

namespace hemopar {

using Labels = std::vector<int>;

struct ContingencyTable {
  Eigen::MatrixXd counts;   // rows: distinct labels of a, cols: distinct labels of b
  std::size_t n = 0;

  static ContingencyTable build(const Labels& a, const Labels& b);
};

// Shannon entropy of a labelling, in nats.
double entropy(const Labels& a);

// Raw mutual information in nats.
double mutual_information(const Labels& a, const Labels& b);

// ||a_hat - a_true||^2 / ||a_true||^2.
double detection_mse(const std::vector<double>& a_hat, const std::vector<double>& a_true);

// Fraction of non-activated voxels that fall in the largest parcel.
double inactive_lumping(const Labels& labels, const std::vector<int>& activation);

struct RefitOptions {
  int drift_order = 4;
  int max_iters = 50;
  double tol = 1e-10;
  double hrf_duration = 25.0;
};

struct ParcelRefit {
  int label = 0;
  HrfCurve hrf;                          // peak-normalised, max |h| = 1
  std::vector<double> residual_trace;    // stacked squared residual after each amplitude step
  int iterations = 0;
};

struct HrfRefit {
  std::vector<ParcelRefit> parcels;                  // ascending label order
  std::vector<std::vector<double>> amplitudes;       // [condition][voxel]
};

// Parcel-wise bilinear fit y_j ~ sum_m a_j^m X^m h_parcel + drift, solved by
// alternating least squares from the canonical HRF.
HrfRefit als_hrf_refit(const Dataset& dataset, const Labels& labels, const RefitOptions& options,
                       Execution exec = Execution::parallel);

struct GlmSpec {
  int drift_order = 4;
  double hrf_duration = 32.0;
  bool operator==(const GlmSpec&) const = default;
};

struct McConfig {
  PhantomSpec phantom;
  Paradigm paradigm;
  DriftSpec drift;
  GlmSpec glm;
  RefitOptions refit;
  std::size_t target_parcels = 4;
  std::vector<double> noise_grid{0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0};
  int runs = 100;
  std::uint64_t base_seed = 0;
  bool record_timing = false;
  bool compute_mse = true;
};

struct McSample {
  double mi = 0.0;
  double mse = 0.0;
  double wall_ms = 0.0;
  double lumping = 0.0;
};

struct McSummary {
  double mean = 0.0;
  double stddev = 0.0;
  double stderr_ = 0.0;
};

struct McReport {
  std::vector<double> noise_grid;
  int runs = 0;
  std::uint64_t base_seed = 0;
  std::vector<std::string> methods;                                  // "sw", "igmm"
  std::vector<std::vector<std::vector<McSample>>> samples;           // [method][sigma][run]
  std::vector<std::vector<std::uint64_t>> seeds;                     // [sigma][run]

  McSummary mi_summary(std::size_t method, std::size_t sigma) const;
  McSummary mse_summary(std::size_t method, std::size_t sigma) const;
  std::size_t method_index(const std::string& name) const;
};

// Seed of Monte Carlo cell (sigma index, run); positional, not sequential.
std::uint64_t mc_cell_seed(std::uint64_t base_seed, std::size_t sigma_index, std::size_t run);

McReport monte_carlo(const McConfig& config, Execution exec = Execution::parallel);

}  // namespace hemopar
