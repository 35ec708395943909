#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hemopar/execution.hpp"
#include "hemopar/grid.hpp"
#include "hemopar/simgen.hpp"

namespace hemopar {

// Canonical double-gamma response and its temporal / dispersion derivatives,
// all sampled on the paradigm's dt grid.
struct HrfBasis {
  HrfCurve canonical;
  HrfCurve temporal;
  HrfCurve dispersion;
};

// Continuous canonical response (unnormalised): difference of two gamma
// densities whose modes sit at `peak_delay` and `undershoot_delay`.
double double_gamma(double t, double peak_delay = 6.0, double undershoot_delay = 16.0, double peak_dispersion = 1.0,
                    double undershoot_dispersion = 1.0, double undershoot_ratio = 1.0 / 6.0);

HrfBasis canonical_hrf_basis(double tr, double dt, double duration);

enum class ColumnRole { canonical, temporal_derivative, dispersion_derivative, drift };

std::string to_string(ColumnRole role);

struct DesignMatrix {
  Eigen::MatrixXd columns;          // N x K
  std::vector<ColumnRole> roles;
  std::vector<std::string> names;   // e.g. "c0.canonical", "drift2"

  Eigen::Index scans() const noexcept { return columns.rows(); }
  Eigen::Index regressors() const noexcept { return columns.cols(); }
};

// Task columns (per condition: canonical, temporal, dispersion) followed by
// `drift_order` DCT columns. Throws NumericalError naming collinear columns
// when the result is rank deficient.
DesignMatrix build_glm_design(const Paradigm& paradigm, const HrfBasis& basis, int drift_order);

struct GlmFit {
  Eigen::VectorXd beta;
  double residual_variance = 0.0;
  int dof = 0;
  double t0 = 0.0;
  double p0 = 0.5;
};

// Least squares against a fixed design, factorised once and reused across
// voxels. Column 0 is the regressor whose one-sided p-value is reported.
class OlsSolver {
public:
  explicit OlsSolver(const DesignMatrix& design);

  GlmFit fit(const Eigen::Ref<const Eigen::VectorXd>& y) const;

  const DesignMatrix& design() const noexcept { return design_; }
  int dof() const noexcept { return dof_; }

private:
  DesignMatrix design_;
  Eigen::MatrixXd pinv_;     // K x N, (X^T X)^{-1} X^T from the QR factors
  double inv_xtx00_ = 0.0;
  int dof_ = 0;
};

GlmFit ols_fit(const Eigen::Ref<const Eigen::VectorXd>& y, const DesignMatrix& design);

// Upper-tail Student-t probability P(T > t) with `dof` degrees of freedom.
double student_t_upper(double t, int dof);

// Per-voxel GLM outputs retained for export alongside the clustering inputs.
struct VoxelGlm {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double t0 = 0.0;
  double p0 = 0.5;
};

inline constexpr double kAlphaEpsilon = 1e-6;

struct FeatureMap {
  Grid2D grid;
  std::vector<Eigen::Vector2d> phi;   // (beta1, beta2) per voxel
  std::vector<double> alpha;          // 1 - p0, clamped to [eps, 1 - eps]
  std::vector<VoxelGlm> glm;          // may be empty for hand-built maps

  std::size_t size() const noexcept { return phi.size(); }
  void validate() const;
};

double clamp_alpha(double p0) noexcept;

// Fits every voxel of the dataset against `design`; features come from the
// first condition's three task regressors.
FeatureMap extract_features(const Dataset& dataset, const DesignMatrix& design,
                            Execution exec = Execution::parallel);

}  // namespace hemopar
