#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hemopar/execution.hpp"
#include "hemopar/grid.hpp"

namespace hemopar {

// Hemodynamic response sampled on {0, dt, ..., D*dt}.
struct HrfCurve {
  std::vector<double> samples;
  double dt = 0.0;
  double duration = 0.0;

  std::size_t lag_count() const noexcept { return samples.size(); }  // D + 1
  bool operator==(const HrfCurve&) const = default;
};

// Shape knobs for a piecewise cubic Bezier HRF: rise to the peak, fall to the
// undershoot, recovery to baseline at `duration`.
struct BezierHrfSpec {
  double time_to_peak = 5.0;
  double peak_amplitude = 1.0;
  double time_to_undershoot = 11.0;
  double undershoot_amplitude = -0.2;
  double duration = 25.0;
  double peak_width = 3.0;
  double undershoot_width = 3.0;

  bool operator==(const BezierHrfSpec&) const = default;
};

// One cubic Bezier segment with monotone abscissa.
struct BezierSegment {
  double x[4];
  double y[4];

  double x_at(double s) const noexcept;
  double y_at(double s) const noexcept;
};

// The three segments of an HRF spec, in time order. Throws ConfigError when a
// segment's abscissa is not strictly increasing in the curve parameter.
std::vector<BezierSegment> bezier_segments(const BezierHrfSpec& spec);

HrfCurve build_bezier_hrf(const BezierHrfSpec& spec, double dt);

// Stimulus onsets per condition on an oversampled dt grid; scans at n * tr.
struct Paradigm {
  std::vector<std::vector<double>> onsets;
  int n_scans = 0;
  double tr = 1.0;
  double dt = 0.5;

  std::size_t conditions() const noexcept { return onsets.size(); }
  int oversampling() const;  // tr / dt
  void validate() const;
  bool operator==(const Paradigm&) const = default;
};

// N x (D + 1) binary matrix: entry (n, d) is 1 iff an onset of `condition`
// falls at n*tr - d*dt (onsets snapped to the dt grid).
Eigen::MatrixXd build_stim_matrix(const Paradigm& paradigm, std::size_t condition, std::size_t lags);

// N x order orthonormal DCT-II basis; column 0 is the constant.
Eigen::MatrixXd dct_basis(int n_scans, int order);

struct GroundTruth {
  std::vector<int> parcel_labels;                 // per voxel, in [0, parcel_count)
  std::vector<int> activation_labels;             // per voxel, 0 or 1
  std::vector<std::vector<double>> amplitudes;    // [condition][voxel]
  std::vector<HrfCurve> hrfs;                     // per parcel

  int parcel_count() const noexcept { return static_cast<int>(hrfs.size()); }
  bool operator==(const GroundTruth&) const = default;
};

struct DriftSpec {
  int order = 4;
  double variance = 11.0;
  bool operator==(const DriftSpec&) const = default;
};

struct Dataset {
  Grid2D grid;
  Paradigm paradigm;
  Eigen::MatrixXd y;               // J x N, one row per voxel
  GroundTruth truth;
  Eigen::MatrixXd drift_coeffs;    // J x order
  DriftSpec drift;
  double noise_variance = 0.0;
  std::uint64_t seed = 0;
};

// Noise-free signal of every parcel/condition: signals[gamma][m] = X^m h_gamma.
std::vector<std::vector<Eigen::VectorXd>> parcel_signals(const Paradigm& paradigm, const GroundTruth& truth);

Dataset synthesize_dataset(const Grid2D& grid, const GroundTruth& truth, const Paradigm& paradigm,
                           const DriftSpec& drift, double noise_variance, std::uint64_t seed,
                           Execution exec = Execution::parallel);

struct AmplitudeLaw {
  double mean = 1.8;
  double variance = 0.25;
  bool operator==(const AmplitudeLaw&) const = default;
};

// Disk of activated voxels.
struct Blob {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  bool operator==(const Blob&) const = default;
};

// Rectangular tiling of the grid into parcels, each with its own HRF and
// activation blobs.
struct PhantomSpec {
  int width = 20;
  int height = 20;
  int tiles_x = 2;
  int tiles_y = 2;
  std::vector<BezierHrfSpec> hrfs;
  std::vector<Blob> blobs;
  AmplitudeLaw amplitude;

  void validate() const;
  bool operator==(const PhantomSpec&) const = default;
};

PhantomSpec default_phantom_spec();
Paradigm default_paradigm();

// Onsets on the dt grid with inter-stimulus intervals uniform in [isi_min, isi_max].
Paradigm generate_paradigm(int n_scans, double tr, double dt, int conditions, double isi_min, double isi_max,
                           double first_onset, std::uint64_t seed);

struct Phantom {
  Grid2D grid;
  GroundTruth truth;
  Paradigm paradigm;
};

// Parcel map, HRFs and activation layout are fixed by `spec`; amplitudes of
// active voxels are drawn from spec.amplitude with `seed`.
Phantom make_phantom(const PhantomSpec& spec, const Paradigm& paradigm, std::uint64_t seed);
Phantom default_phantom(std::uint64_t seed);

// Draws `count` amplitudes from the law.
std::vector<double> sample_amplitudes(const AmplitudeLaw& law, std::size_t count, std::uint64_t seed);

}  // namespace hemopar
