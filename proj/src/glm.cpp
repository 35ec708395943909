#include "hemopar/glm.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>

#include <boost/math/distributions/students_t.hpp>

#include "hemopar/errors.hpp"

namespace hemopar {

namespace {

// Gamma density with mode `mode` and scale `scale` (shape = mode/scale + 1).
double gamma_by_mode(double t, double mode, double scale) {
  if (t <= 0.0) return 0.0;
  const double shape = mode / scale + 1.0;
  return std::exp((shape - 1.0) * std::log(t) - t / scale - std::lgamma(shape) - shape * std::log(scale));
}

HrfCurve sample_curve(double dt, double duration, const auto& fn) {
  HrfCurve c;
  c.dt = dt;
  c.duration = duration;
  const auto steps = static_cast<std::size_t>(std::floor(duration / dt + 1e-9));
  c.samples.resize(steps + 1);
  for (std::size_t d = 0; d <= steps; ++d) c.samples[d] = fn(static_cast<double>(d) * dt);
  return c;
}

constexpr double kPeakDelay = 6.0;
constexpr double kUndershootDelay = 16.0;
constexpr double kDispersionStep = 0.01;
constexpr double kOnsetShift = 1.0;

}  // namespace

double double_gamma(double t, double peak_delay, double undershoot_delay, double peak_dispersion,
                    double undershoot_dispersion, double undershoot_ratio) {
  return gamma_by_mode(t, peak_delay, peak_dispersion) -
         undershoot_ratio * gamma_by_mode(t, undershoot_delay, undershoot_dispersion);
}

HrfBasis canonical_hrf_basis(double tr, double dt, double duration) {
  if (!(dt > 0.0) || !(tr > 0.0)) throw ConfigError("canonical basis needs positive tr and dt");
  const double ratio = tr / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) throw ConfigError("dt must divide tr");
  if (duration < 25.0) throw ConfigError("canonical HRF duration must be >= 25 s");

  auto raw = [](double t, double dispersion) { return double_gamma(t, kPeakDelay, kUndershootDelay, dispersion); };
  const HrfCurve unscaled = sample_curve(dt, duration, [&](double t) { return raw(t, 1.0); });
  const double peak = *std::max_element(unscaled.samples.begin(), unscaled.samples.end());
  auto h = [&](double t) { return raw(t, 1.0) / peak; };

  HrfBasis basis;
  basis.canonical = sample_curve(dt, duration, h);
  const double half = 0.5 * kOnsetShift;
  basis.temporal = sample_curve(dt, duration, [&](double t) { return (h(t + half) - h(t - half)) / kOnsetShift; });
  basis.dispersion = sample_curve(dt, duration, [&](double t) {
    return (h(t) - raw(t, 1.0 + kDispersionStep) / peak) / kDispersionStep;
  });
  return basis;
}

std::string to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::canonical: return "canonical";
    case ColumnRole::temporal_derivative: return "temporal_derivative";
    case ColumnRole::dispersion_derivative: return "dispersion_derivative";
    case ColumnRole::drift: return "drift";
  }
  return "unknown";
}

DesignMatrix build_glm_design(const Paradigm& paradigm, const HrfBasis& basis, int drift_order) {
  paradigm.validate();
  const HrfCurve* curves[] = {&basis.canonical, &basis.temporal, &basis.dispersion};
  const ColumnRole roles[] = {ColumnRole::canonical, ColumnRole::temporal_derivative,
                              ColumnRole::dispersion_derivative};
  for (const HrfCurve* c : curves)
    if (std::abs(c->dt - paradigm.dt) > 1e-12) throw ConfigError("HRF basis dt does not match the paradigm dt");

  const Eigen::Index n = paradigm.n_scans;
  const Eigen::Index k = static_cast<Eigen::Index>(3 * paradigm.conditions()) + drift_order;
  DesignMatrix design;
  design.columns.resize(n, k);
  Eigen::Index col = 0;
  for (std::size_t m = 0; m < paradigm.conditions(); ++m) {
    const Eigen::MatrixXd stim = build_stim_matrix(paradigm, m, basis.canonical.samples.size());
    for (int b = 0; b < 3; ++b) {
      const auto& s = curves[b]->samples;
      design.columns.col(col++) = stim * Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
      design.roles.push_back(roles[b]);
      design.names.push_back("c" + std::to_string(m) + "." + to_string(roles[b]));
    }
  }
  design.columns.rightCols(drift_order) = dct_basis(paradigm.n_scans, drift_order);
  for (int d = 0; d < drift_order; ++d) {
    design.roles.push_back(ColumnRole::drift);
    design.names.push_back("drift" + std::to_string(d));
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.columns);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    std::string which;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < k; ++i) {
      if (!which.empty()) which += ", ";
      which += design.names[static_cast<std::size_t>(perm(i))];
    }
    throw NumericalError("design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                         std::to_string(k) + "); collinear columns: " + which);
  }
  return design;
}

double student_t_upper(double t, int dof) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::cdf(boost::math::complement(dist, t));
}

OlsSolver::OlsSolver(const DesignMatrix& design) : design_(design) {
  const Eigen::Index n = design.scans(), k = design.regressors();
  if (n <= k)
    throw ConfigError("OLS needs more scans than regressors (N=" + std::to_string(n) + ", K=" + std::to_string(k) + ")");
  if (!design.columns.allFinite()) throw DataError("design matrix contains non-finite values");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.columns);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw NumericalError("design matrix is rank deficient");
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  const auto r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd permuted = r.solve(q.transpose());
  pinv_ = qr.colsPermutation() * permuted;
  inv_xtx00_ = pinv_.row(0).squaredNorm();
  dof_ = static_cast<int>(n - k);
}

GlmFit OlsSolver::fit(const Eigen::Ref<const Eigen::VectorXd>& y) const {
  if (y.size() != design_.scans())
    throw DataError("time series has " + std::to_string(y.size()) + " samples, design has " +
                    std::to_string(design_.scans()));
  if (!y.allFinite()) throw DataError("time series contains non-finite values");

  GlmFit out;
  out.beta = pinv_ * y;
  out.dof = dof_;
  const double rss = (y - design_.columns * out.beta).squaredNorm();
  const double y2 = y.squaredNorm();

  // Residuals at rounding level mean the series lies in the design span.
  if (rss <= 1e-24 * y2) {
    out.residual_variance = 0.0;
    const double signal0 = std::abs(out.beta(0)) * design_.columns.col(0).norm();
    if (signal0 <= 1e-10 * std::sqrt(y2)) {
      out.t0 = 0.0;
      out.p0 = 0.5;
    } else {
      out.t0 = std::copysign(std::numeric_limits<double>::infinity(), out.beta(0));
      out.p0 = out.beta(0) > 0 ? 0.0 : 1.0;
    }
    return out;
  }
  out.residual_variance = rss / dof_;
  out.t0 = out.beta(0) / std::sqrt(out.residual_variance * inv_xtx00_);
  out.p0 = student_t_upper(out.t0, dof_);
  return out;
}

GlmFit ols_fit(const Eigen::Ref<const Eigen::VectorXd>& y, const DesignMatrix& design) {
  return OlsSolver(design).fit(y);
}

double clamp_alpha(double p0) noexcept { return std::clamp(1.0 - p0, kAlphaEpsilon, 1.0 - kAlphaEpsilon); }

void FeatureMap::validate() const {
  if (phi.size() != grid.size() || alpha.size() != grid.size())
    throw DataError("feature map does not cover the grid");
  if (!glm.empty() && glm.size() != grid.size()) throw DataError("GLM table does not cover the grid");
  for (std::size_t j = 0; j < phi.size(); ++j) {
    if (!phi[j].allFinite()) throw DataError("non-finite feature at voxel " + std::to_string(j));
    if (!(alpha[j] >= 0.0 && alpha[j] <= 1.0)) throw DataError("alpha outside [0, 1] at voxel " + std::to_string(j));
  }
}

FeatureMap extract_features(const Dataset& dataset, const DesignMatrix& design, Execution exec) {
  if (dataset.y.cols() != design.scans())
    throw DataError("dataset has " + std::to_string(dataset.y.cols()) + " scans, design has " +
                    std::to_string(design.scans()));
  if (design.regressors() < 3 || design.roles[0] != ColumnRole::canonical)
    throw ConfigError("design must start with the canonical, temporal and dispersion regressors");

  const OlsSolver solver(design);
  const std::size_t voxels = dataset.grid.size();
  if (static_cast<std::size_t>(dataset.y.rows()) != voxels) throw DataError("dataset rows do not match the grid");

  FeatureMap fm;
  fm.grid = dataset.grid;
  fm.phi.resize(voxels);
  fm.alpha.resize(voxels);
  fm.glm.resize(voxels);

  std::size_t failed_voxel = voxels;
  std::string failure;
  std::mutex failure_mutex;

  auto voxel = [&](std::size_t j) {
    try {
      const GlmFit fit = solver.fit(dataset.y.row(static_cast<Eigen::Index>(j)).transpose());
      fm.phi[j] = Eigen::Vector2d(fit.beta(1), fit.beta(2));
      fm.alpha[j] = clamp_alpha(fit.p0);
      fm.glm[j] = VoxelGlm{fit.beta(0), fit.beta(1), fit.beta(2), fit.t0, fit.p0};
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_mutex);
      if (j < failed_voxel) {
        failed_voxel = j;
        failure = e.what();
      }
    }
  };

  const auto count = static_cast<std::ptrdiff_t>(voxels);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < count; ++j) voxel(static_cast<std::size_t>(j));
  } else {
    for (std::ptrdiff_t j = 0; j < count; ++j) voxel(static_cast<std::size_t>(j));
  }
  if (failed_voxel < voxels) throw DataError("voxel " + std::to_string(failed_voxel) + ": " + failure);
  return fm;
}

}  // namespace hemopar
