#include "hemopar/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hemopar/errors.hpp"
#include "hemopar/rng.hpp"

namespace hemopar {

namespace {

constexpr double kGridTol = 1e-9;

double bernstein(const double (&c)[4], double s) noexcept {
  const double u = 1.0 - s;
  return u * u * u * c[0] + 3.0 * u * u * s * c[1] + 3.0 * u * s * s * c[2] + s * s * s * c[3];
}

// x'(s) is a quadratic Bernstein polynomial in (b0, b1, b2); it is strictly
// positive on [0, 1] iff b0 > 0, b2 > 0 and (b1 >= 0 or b1^2 < b0 b2).
bool strictly_increasing(const BezierSegment& seg) noexcept {
  const double b0 = seg.x[1] - seg.x[0];
  const double b1 = seg.x[2] - seg.x[1];
  const double b2 = seg.x[3] - seg.x[2];
  if (!(b0 > 0.0) || !(b2 > 0.0)) return false;
  return b1 >= 0.0 || b1 * b1 < b0 * b2;
}

// Parameter s with x(s) = t, by bisection on a strictly increasing x.
double invert_abscissa(const BezierSegment& seg, double t) noexcept {
  if (t <= seg.x[0]) return 0.0;
  if (t >= seg.x[3]) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (seg.x_at(mid) < t)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::size_t steps_in(double span, double dt, const char* what) {
  const double ratio = span / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > kGridTol * std::max(1.0, ratio))
    throw ConfigError(std::string(what) + " must be an integer multiple of dt");
  return static_cast<std::size_t>(rounded);
}

}  // namespace

double BezierSegment::x_at(double s) const noexcept { return bernstein(x, s); }
double BezierSegment::y_at(double s) const noexcept { return bernstein(y, s); }

std::vector<BezierSegment> bezier_segments(const BezierHrfSpec& spec) {
  const double ttp = spec.time_to_peak, ttu = spec.time_to_undershoot, dur = spec.duration;
  if (!(0.0 < ttp && ttp < ttu && ttu < dur))
    throw ConfigError("HRF spec requires 0 < time_to_peak < time_to_undershoot < duration");
  if (!(spec.peak_amplitude >= 0.0 && spec.undershoot_amplitude <= 0.0))
    throw ConfigError("HRF spec requires peak_amplitude >= 0 >= undershoot_amplitude");
  if (!(spec.peak_width > 0.0 && spec.undershoot_width > 0.0))
    throw ConfigError("HRF peak and undershoot widths must be positive");

  const double hp = 0.5 * spec.peak_width, hu = 0.5 * spec.undershoot_width;
  const double pk = spec.peak_amplitude, us = spec.undershoot_amplitude;
  std::vector<BezierSegment> segs{
      BezierSegment{{0.0, hp, ttp - hp, ttp}, {0.0, 0.0, pk, pk}},
      BezierSegment{{ttp, ttp + hp, ttu - hu, ttu}, {pk, pk, us, us}},
      BezierSegment{{ttu, ttu + hu, dur - hu, dur}, {us, us, 0.0, 0.0}},
  };
  static constexpr const char* names[] = {"rise", "fall", "recovery"};
  for (std::size_t i = 0; i < segs.size(); ++i)
    if (!strictly_increasing(segs[i]))
      throw ConfigError(std::string("non-monotone Bezier parameterization in the ") + names[i] +
                        " segment; reduce peak/undershoot widths");
  return segs;
}

HrfCurve build_bezier_hrf(const BezierHrfSpec& spec, double dt) {
  if (!(dt > 0.0)) throw ConfigError("HRF sampling period must be positive");
  const auto segs = bezier_segments(spec);
  const std::size_t d_max = steps_in(spec.duration, dt, "HRF duration");

  HrfCurve curve;
  curve.dt = dt;
  curve.duration = spec.duration;
  curve.samples.resize(d_max + 1);
  for (std::size_t d = 0; d <= d_max; ++d) {
    const double t = static_cast<double>(d) * dt;
    const BezierSegment& seg = t <= segs[0].x[3] ? segs[0] : (t <= segs[1].x[3] ? segs[1] : segs[2]);
    curve.samples[d] = seg.y_at(invert_abscissa(seg, t));
  }
  curve.samples.front() = 0.0;
  curve.samples.back() = 0.0;
  return curve;
}

int Paradigm::oversampling() const { return static_cast<int>(steps_in(tr, dt, "TR")); }

void Paradigm::validate() const {
  if (n_scans < 1) throw ConfigError("paradigm needs n_scans >= 1");
  if (!(dt > 0.0) || !(tr > 0.0)) throw ConfigError("paradigm tr and dt must be positive");
  if (oversampling() < 1) throw ConfigError("paradigm tr must be an integer multiple of dt");
  if (onsets.empty()) throw ConfigError("paradigm needs at least one condition");
  const double window = n_scans * tr;
  for (std::size_t m = 0; m < onsets.size(); ++m) {
    for (std::size_t i = 0; i < onsets[m].size(); ++i) {
      const double t = onsets[m][i];
      if (!(t >= 0.0 && t < window))
        throw ConfigError("onset " + std::to_string(t) + " of condition " + std::to_string(m) +
                          " lies outside [0, n_scans*tr)");
      if (i > 0 && !(t > onsets[m][i - 1]))
        throw ConfigError("onsets of condition " + std::to_string(m) + " must be strictly increasing");
    }
  }
}

Eigen::MatrixXd build_stim_matrix(const Paradigm& paradigm, std::size_t condition, std::size_t lags) {
  if (condition >= paradigm.conditions()) throw ConfigError("condition index out of range");
  const long os = paradigm.oversampling();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(paradigm.n_scans, static_cast<Eigen::Index>(lags));
  for (double onset : paradigm.onsets[condition]) {
    const long k = std::lround(onset / paradigm.dt);
    for (long n = 0; n < paradigm.n_scans; ++n) {
      const long d = n * os - k;
      if (d >= 0 && d < static_cast<long>(lags)) x(n, d) = 1.0;
    }
  }
  return x;
}

Eigen::MatrixXd dct_basis(int n_scans, int order) {
  if (order < 1 || order > n_scans) throw ConfigError("drift order must be in [1, n_scans]");
  Eigen::MatrixXd p(n_scans, order);
  const double n = n_scans;
  for (int k = 0; k < order; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n_scans; ++i)
      p(i, k) = scale * std::cos(std::numbers::pi * k * (i + 0.5) / n);
  }
  return p;
}

std::vector<std::vector<Eigen::VectorXd>> parcel_signals(const Paradigm& paradigm, const GroundTruth& truth) {
  std::vector<std::vector<Eigen::VectorXd>> out(truth.hrfs.size());
  for (std::size_t g = 0; g < truth.hrfs.size(); ++g) {
    const HrfCurve& h = truth.hrfs[g];
    if (std::abs(h.dt - paradigm.dt) > 1e-12)
      throw ConfigError("HRF of parcel " + std::to_string(g) + " is sampled at dt=" + std::to_string(h.dt) +
                        " but the paradigm uses dt=" + std::to_string(paradigm.dt));
    const Eigen::Map<const Eigen::VectorXd> hv(h.samples.data(), static_cast<Eigen::Index>(h.samples.size()));
    for (std::size_t m = 0; m < paradigm.conditions(); ++m)
      out[g].push_back(build_stim_matrix(paradigm, m, h.samples.size()) * hv);
  }
  return out;
}

Dataset synthesize_dataset(const Grid2D& grid, const GroundTruth& truth, const Paradigm& paradigm,
                           const DriftSpec& drift, double noise_variance, std::uint64_t seed, Execution exec) {
  paradigm.validate();
  const std::size_t voxels = grid.size();
  if (truth.parcel_labels.size() != voxels || truth.activation_labels.size() != voxels)
    throw ConfigError("ground-truth maps do not match the grid size");
  if (truth.amplitudes.size() != paradigm.conditions())
    throw ConfigError("ground truth has amplitudes for " + std::to_string(truth.amplitudes.size()) +
                      " conditions, paradigm has " + std::to_string(paradigm.conditions()));
  for (const auto& a : truth.amplitudes)
    if (a.size() != voxels) throw ConfigError("amplitude map does not match the grid size");
  for (int label : truth.parcel_labels)
    if (label < 0 || label >= truth.parcel_count()) throw ConfigError("parcel label without an HRF");
  if (!(noise_variance >= 0.0)) throw ConfigError("noise variance must be >= 0");
  if (!(drift.variance >= 0.0)) throw ConfigError("drift variance must be >= 0");

  const auto signals = parcel_signals(paradigm, truth);
  const Eigen::MatrixXd basis = dct_basis(paradigm.n_scans, drift.order);
  const int n = paradigm.n_scans;
  const double noise_sd = std::sqrt(noise_variance);
  const double drift_sd = std::sqrt(drift.variance);

  Dataset ds;
  ds.grid = grid;
  ds.paradigm = paradigm;
  ds.truth = truth;
  ds.drift = drift;
  ds.noise_variance = noise_variance;
  ds.seed = seed;
  ds.y.resize(static_cast<Eigen::Index>(voxels), n);
  ds.drift_coeffs.resize(static_cast<Eigen::Index>(voxels), drift.order);

  auto voxel = [&](std::size_t j) {
    Rng rng(derive_seed(seed, {j}));
    Eigen::VectorXd coeffs(drift.order);
    for (int k = 0; k < drift.order; ++k) coeffs(k) = drift_sd * rng.normal();
    Eigen::VectorXd yj = basis * coeffs;
    const auto& sig = signals[static_cast<std::size_t>(truth.parcel_labels[j])];
    for (std::size_t m = 0; m < sig.size(); ++m) yj += truth.amplitudes[m][j] * sig[m];
    for (int i = 0; i < n; ++i) yj(i) += noise_sd * rng.normal();
    const auto row = static_cast<Eigen::Index>(j);
    ds.y.row(row) = yj.transpose();
    ds.drift_coeffs.row(row) = coeffs.transpose();
  };

  const auto count = static_cast<std::ptrdiff_t>(voxels);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < count; ++j) voxel(static_cast<std::size_t>(j));
  } else {
    for (std::ptrdiff_t j = 0; j < count; ++j) voxel(static_cast<std::size_t>(j));
  }
  return ds;
}

void PhantomSpec::validate() const {
  if (width < 1 || height < 1) throw ConfigError("phantom grid dimensions must be >= 1");
  if (tiles_x < 1 || tiles_y < 1 || tiles_x > width || tiles_y > height)
    throw ConfigError("phantom tiling must fit inside the grid");
  if (hrfs.size() != static_cast<std::size_t>(tiles_x * tiles_y))
    throw ConfigError("phantom needs one HRF spec per tile (" + std::to_string(tiles_x * tiles_y) + "), got " +
                      std::to_string(hrfs.size()));
  for (const auto& b : blobs)
    if (!(b.radius >= 0.0)) throw ConfigError("blob radius must be >= 0");
  if (!(amplitude.variance >= 0.0)) throw ConfigError("amplitude variance must be >= 0");
  for (const auto& h : hrfs) bezier_segments(h);
}

PhantomSpec default_phantom_spec() {
  PhantomSpec spec;
  const double ttps[] = {4.0, 6.0, 8.0, 10.0};
  for (double ttp : ttps) {
    BezierHrfSpec h;
    h.time_to_peak = ttp;
    h.time_to_undershoot = ttp + 6.0;
    h.peak_amplitude = 1.0;
    h.undershoot_amplitude = -0.2;
    h.duration = 25.0;
    h.peak_width = 3.0;
    h.undershoot_width = 3.0;
    spec.hrfs.push_back(h);
  }
  // One compact blob (32 voxels) centred in each territory.
  spec.blobs = {{4.5, 4.5, 3.2}, {14.5, 4.5, 3.2}, {4.5, 14.5, 3.2}, {14.5, 14.5, 3.2}};
  return spec;
}

Paradigm generate_paradigm(int n_scans, double tr, double dt, int conditions, double isi_min, double isi_max,
                           double first_onset, std::uint64_t seed) {
  if (conditions < 1) throw ConfigError("paradigm generator needs >= 1 condition");
  if (!(isi_min >= dt && isi_max >= isi_min)) throw ConfigError("paradigm generator needs dt <= isi_min <= isi_max");
  Paradigm p;
  p.n_scans = n_scans;
  p.tr = tr;
  p.dt = dt;
  p.onsets.resize(static_cast<std::size_t>(conditions));
  Rng rng(derive_seed(seed, {0x70617261ULL}));
  const double window = n_scans * tr;
  double t = first_onset;
  std::size_t m = 0;
  while (true) {
    const double snapped = std::round(t / dt) * dt;
    if (snapped >= window) break;
    p.onsets[m].push_back(snapped);
    m = (m + 1) % p.onsets.size();
    t = snapped + std::max(dt, std::round(rng.uniform(isi_min, isi_max) / dt) * dt);
  }
  p.validate();
  return p;
}

Paradigm default_paradigm() { return generate_paradigm(500, 1.0, 0.5, 1, 3.0, 7.0, 2.0, 2015); }

std::vector<double> sample_amplitudes(const AmplitudeLaw& law, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  const double sd = std::sqrt(law.variance);
  std::vector<double> out(count);
  for (auto& a : out) a = rng.normal(law.mean, sd);
  return out;
}

Phantom make_phantom(const PhantomSpec& spec, const Paradigm& paradigm, std::uint64_t seed) {
  spec.validate();
  paradigm.validate();
  Phantom ph;
  ph.grid = Grid2D(spec.width, spec.height);
  ph.paradigm = paradigm;
  const std::size_t voxels = ph.grid.size();
  GroundTruth& truth = ph.truth;
  truth.parcel_labels.resize(voxels);
  truth.activation_labels.assign(voxels, 0);
  for (std::size_t j = 0; j < voxels; ++j) {
    const int x = ph.grid.x_of(j), y = ph.grid.y_of(j);
    const int tx = x * spec.tiles_x / spec.width;
    const int ty = y * spec.tiles_y / spec.height;
    truth.parcel_labels[j] = ty * spec.tiles_x + tx;
    for (const auto& b : spec.blobs) {
      const double dx = x - b.cx, dy = y - b.cy;
      if (dx * dx + dy * dy <= b.radius * b.radius) truth.activation_labels[j] = 1;
    }
  }
  for (const auto& h : spec.hrfs) truth.hrfs.push_back(build_bezier_hrf(h, paradigm.dt));

  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < voxels; ++j)
    if (truth.activation_labels[j]) active.push_back(j);
  truth.amplitudes.assign(paradigm.conditions(), std::vector<double>(voxels, 0.0));
  for (std::size_t m = 0; m < paradigm.conditions(); ++m) {
    const auto draws = sample_amplitudes(spec.amplitude, active.size(), derive_seed(seed, {0x616d70ULL, m}));
    for (std::size_t i = 0; i < active.size(); ++i) truth.amplitudes[m][active[i]] = draws[i];
  }
  return ph;
}

Phantom default_phantom(std::uint64_t seed) { return make_phantom(default_phantom_spec(), default_paradigm(), seed); }

}  // namespace hemopar
