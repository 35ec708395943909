#include "hemopar/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>

#include "hemopar/errors.hpp"
#include "hemopar/rng.hpp"

namespace hemopar {

namespace {

std::vector<int> compact(const Labels& a, int& count) {
  std::map<int, int> ids;
  for (int v : a) ids.emplace(v, 0);
  int next = 0;
  for (auto& [k, v] : ids) v = next++;
  count = next;
  std::vector<int> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = ids[a[i]];
  return out;
}

}  // namespace

ContingencyTable ContingencyTable::build(const Labels& a, const Labels& b) {
  if (a.size() != b.size()) throw DataError("labelings have different voxel counts");
  int na = 0, nb = 0;
  const auto ca = compact(a, na);
  const auto cb = compact(b, nb);
  ContingencyTable t;
  t.counts = Eigen::MatrixXd::Zero(na, nb);
  for (std::size_t i = 0; i < a.size(); ++i) t.counts(ca[i], cb[i]) += 1.0;
  t.n = a.size();
  return t;
}

double entropy(const Labels& a) {
  if (a.empty()) return 0.0;
  std::map<int, std::size_t> counts;
  for (int v : a) ++counts[v];
  const double n = static_cast<double>(a.size());
  double h = 0.0;
  for (const auto& [label, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double mutual_information(const Labels& a, const Labels& b) {
  const ContingencyTable t = ContingencyTable::build(a, b);
  if (t.n == 0) return 0.0;
  const double n = static_cast<double>(t.n);
  const Eigen::VectorXd rows = t.counts.rowwise().sum();
  const Eigen::RowVectorXd cols = t.counts.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index i = 0; i < t.counts.rows(); ++i)
    for (Eigen::Index k = 0; k < t.counts.cols(); ++k) {
      const double c = t.counts(i, k);
      if (c > 0.0) mi += c / n * std::log(c * n / (rows(i) * cols(k)));
    }
  return std::max(mi, 0.0);
}

double detection_mse(const std::vector<double>& a_hat, const std::vector<double>& a_true) {
  if (a_hat.size() != a_true.size()) throw DataError("amplitude maps have different lengths");
  double err = 0.0, norm = 0.0;
  for (std::size_t j = 0; j < a_true.size(); ++j) {
    const double e = a_hat[j] - a_true[j];
    err += e * e;
    norm += a_true[j] * a_true[j];
  }
  if (!(norm > 0.0)) throw DataError("detection MSE is undefined for an all-zero ground truth");
  return err / norm;
}

double inactive_lumping(const Labels& labels, const std::vector<int>& activation) {
  if (labels.size() != activation.size()) throw DataError("label and activation maps differ in size");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  int largest = 0;
  std::size_t best = 0;
  for (const auto& [l, s] : sizes)
    if (s > best) {
      best = s;
      largest = l;
    }
  std::size_t inactive = 0, lumped = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (activation[j]) continue;
    ++inactive;
    if (labels[j] == largest) ++lumped;
  }
  return inactive ? static_cast<double>(lumped) / static_cast<double>(inactive) : 0.0;
}

// ---------------------------------------------------------------------------
// ALS refit

namespace {

struct RefitContext {
  std::vector<Eigen::MatrixXd> stim;                 // drift-projected S^m, N x L
  std::vector<std::vector<Eigen::MatrixXd>> gram;    // S^m' S^k
  Eigen::MatrixXd residualised;                      // J x N drift-projected data
  Eigen::VectorXd initial_hrf;
  std::size_t conditions = 0;
};

void normalise_peak(Eigen::VectorXd& h, std::vector<Eigen::VectorXd>& amps, int label) {
  Eigen::Index idx = 0;
  h.cwiseAbs().maxCoeff(&idx);
  const double c = h(idx);
  if (c == 0.0 || !std::isfinite(c)) throw NumericalError("HRF estimate vanished in parcel " + std::to_string(label));
  h /= c;
  for (auto& a : amps) a *= c;
}

// amps[m](i): amplitude of condition m at member i.
double amplitude_step(const RefitContext& ctx, const std::vector<std::size_t>& members, const Eigen::VectorXd& h,
                      std::vector<Eigen::VectorXd>& amps) {
  const std::size_t mcount = ctx.conditions;
  Eigen::MatrixXd b(ctx.stim[0].rows(), static_cast<Eigen::Index>(mcount));
  for (std::size_t m = 0; m < mcount; ++m) b.col(static_cast<Eigen::Index>(m)) = ctx.stim[m] * h;
  const Eigen::MatrixXd btb = b.transpose() * b;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(btb);
  const bool usable = btb.diagonal().minCoeff() > 0.0 && ldlt.info() == Eigen::Success;

  amps.assign(mcount, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(members.size())));
  double residual = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto r = ctx.residualised.row(static_cast<Eigen::Index>(members[i])).transpose();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mcount));
    if (usable) a = ldlt.solve(b.transpose() * r);
    for (std::size_t m = 0; m < mcount; ++m) amps[m](static_cast<Eigen::Index>(i)) = a(static_cast<Eigen::Index>(m));
    residual += (r - b * a).squaredNorm();
  }
  return residual;
}

Eigen::VectorXd hrf_step(const RefitContext& ctx, const std::vector<std::size_t>& members,
                         const std::vector<Eigen::VectorXd>& amps, int label) {
  const Eigen::Index lags = ctx.stim[0].cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(lags, lags);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(lags);
  for (std::size_t m = 0; m < ctx.conditions; ++m) {
    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(ctx.residualised.cols());
    for (std::size_t i = 0; i < members.size(); ++i)
      weighted += amps[m](static_cast<Eigen::Index>(i)) *
                  ctx.residualised.row(static_cast<Eigen::Index>(members[i])).transpose();
    rhs += ctx.stim[m].transpose() * weighted;
    for (std::size_t k = 0; k < ctx.conditions; ++k) g += amps[m].dot(amps[k]) * ctx.gram[m][k];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13))
    throw NumericalError("singular FIR system in parcel " + std::to_string(label) +
                         " (insufficient excitation)");
  return llt.solve(rhs);
}

ParcelRefit refit_parcel(const RefitContext& ctx, const std::vector<std::size_t>& members, int label,
                         const RefitOptions& opt, std::vector<Eigen::VectorXd>& amps) {
  ParcelRefit out;
  out.label = label;
  Eigen::VectorXd h = ctx.initial_hrf;
  double total = 0.0;
  for (auto j : members) total += ctx.residualised.row(static_cast<Eigen::Index>(j)).squaredNorm();
  const double floor = 1e-28 * total;

  double residual = amplitude_step(ctx, members, h, amps);
  out.residual_trace.push_back(residual);
  for (int it = 0; it < opt.max_iters; ++it) {
    h = hrf_step(ctx, members, amps, label);
    normalise_peak(h, amps, label);
    const double next = amplitude_step(ctx, members, h, amps);
    out.residual_trace.push_back(next);
    out.iterations = it + 1;
    const bool converged = next <= floor || std::abs(residual - next) <= opt.tol * residual;
    residual = next;
    if (converged) break;
  }
  out.hrf.dt = 0.0;
  out.hrf.samples.assign(h.data(), h.data() + h.size());
  return out;
}

}  // namespace

HrfRefit als_hrf_refit(const Dataset& dataset, const Labels& labels, const RefitOptions& options, Execution exec) {
  const Paradigm& paradigm = dataset.paradigm;
  paradigm.validate();
  const std::size_t voxels = dataset.grid.size();
  if (labels.size() != voxels) throw DataError("label map does not match the dataset grid");
  if (options.max_iters < 1) throw ConfigError("refit max_iters must be >= 1");
  const auto lag_count = static_cast<Eigen::Index>(std::floor(options.hrf_duration / paradigm.dt + 1e-9)) + 1;
  if (lag_count < 2) throw ConfigError("refit HRF duration must cover at least one dt step");

  RefitContext ctx;
  ctx.conditions = paradigm.conditions();
  const Eigen::MatrixXd drift = dct_basis(paradigm.n_scans, options.drift_order);
  auto project = [&](const Eigen::MatrixXd& m) -> Eigen::MatrixXd { return m - drift * (drift.transpose() * m); };
  for (std::size_t m = 0; m < ctx.conditions; ++m)
    ctx.stim.push_back(project(build_stim_matrix(paradigm, m, static_cast<std::size_t>(lag_count))));
  ctx.gram.assign(ctx.conditions, std::vector<Eigen::MatrixXd>(ctx.conditions));
  for (std::size_t m = 0; m < ctx.conditions; ++m)
    for (std::size_t k = 0; k < ctx.conditions; ++k) ctx.gram[m][k] = ctx.stim[m].transpose() * ctx.stim[k];
  ctx.residualised = project(dataset.y.transpose()).transpose();

  ctx.initial_hrf.resize(lag_count);
  for (Eigen::Index d = 0; d < lag_count; ++d) ctx.initial_hrf(d) = double_gamma(static_cast<double>(d) * paradigm.dt);
  ctx.initial_hrf /= ctx.initial_hrf.cwiseAbs().maxCoeff();

  std::map<int, std::vector<std::size_t>> parcels;
  for (std::size_t j = 0; j < voxels; ++j) parcels[labels[j]].push_back(j);
  std::vector<int> ids;
  std::vector<const std::vector<std::size_t>*> member_lists;
  for (const auto& [id, members] : parcels) {
    ids.push_back(id);
    member_lists.push_back(&members);
  }

  HrfRefit out;
  out.parcels.resize(ids.size());
  out.amplitudes.assign(ctx.conditions, std::vector<double>(voxels, 0.0));
  std::vector<std::string> failures(ids.size());

  auto run = [&](std::size_t p) {
    try {
      std::vector<Eigen::VectorXd> amps;
      out.parcels[p] = refit_parcel(ctx, *member_lists[p], ids[p], options, amps);
      out.parcels[p].hrf.dt = paradigm.dt;
      out.parcels[p].hrf.duration = static_cast<double>(lag_count - 1) * paradigm.dt;
      const auto& members = *member_lists[p];
      for (std::size_t m = 0; m < ctx.conditions; ++m)
        for (std::size_t i = 0; i < members.size(); ++i)
          out.amplitudes[m][members[i]] = amps[m](static_cast<Eigen::Index>(i));
    } catch (const std::exception& e) {
      failures[p] = e.what();
    }
  };
  const auto count = static_cast<std::ptrdiff_t>(ids.size());
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t p = 0; p < count; ++p) run(static_cast<std::size_t>(p));
  } else {
    for (std::ptrdiff_t p = 0; p < count; ++p) run(static_cast<std::size_t>(p));
  }
  for (const auto& f : failures)
    if (!f.empty()) throw NumericalError(f);
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo harness

namespace {

McSummary summarise(const std::vector<double>& v) {
  McSummary s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
    s.stderr_ = s.stddev / std::sqrt(n);
  }
  return s;
}

[[noreturn]] void rethrow_tagged(std::exception_ptr ep, const std::string& tag) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    throw ConfigError(tag + e.what());
  } catch (const DataError& e) {
    throw DataError(tag + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(tag + e.what());
  } catch (const std::exception& e) {
    throw NumericalError(tag + e.what());
  }
}

}  // namespace

McSummary McReport::mi_summary(std::size_t method, std::size_t sigma) const {
  std::vector<double> v;
  for (const auto& s : samples.at(method).at(sigma)) v.push_back(s.mi);
  return summarise(v);
}

McSummary McReport::mse_summary(std::size_t method, std::size_t sigma) const {
  std::vector<double> v;
  for (const auto& s : samples.at(method).at(sigma)) v.push_back(s.mse);
  return summarise(v);
}

std::size_t McReport::method_index(const std::string& name) const {
  for (std::size_t i = 0; i < methods.size(); ++i)
    if (methods[i] == name) return i;
  throw ConfigError("report has no method '" + name + "'");
}

std::uint64_t mc_cell_seed(std::uint64_t base_seed, std::size_t sigma_index, std::size_t run) {
  return derive_seed(base_seed, {sigma_index, run});
}

McReport monte_carlo(const McConfig& config, Execution exec) {
  if (config.runs < 1) throw ConfigError("Monte Carlo needs runs >= 1");
  if (config.noise_grid.empty()) throw ConfigError("Monte Carlo needs a non-empty noise grid");
  config.phantom.validate();
  config.paradigm.validate();

  const HrfBasis basis =
      canonical_hrf_basis(config.paradigm.tr, config.paradigm.dt, config.glm.hrf_duration);
  const DesignMatrix design = build_glm_design(config.paradigm, basis, config.glm.drift_order);
  const Method methods[] = {Method::sw, Method::igmm};

  McReport report;
  report.noise_grid = config.noise_grid;
  report.runs = config.runs;
  report.base_seed = config.base_seed;
  for (auto m : methods) report.methods.push_back(to_string(m));
  const std::size_t sigmas = config.noise_grid.size(), runs = static_cast<std::size_t>(config.runs);
  report.samples.assign(std::size(methods), std::vector<std::vector<McSample>>(sigmas, std::vector<McSample>(runs)));
  report.seeds.assign(sigmas, std::vector<std::uint64_t>(runs));

  const std::size_t cells = sigmas * runs;
  std::vector<std::exception_ptr> errors(cells);

  auto cell = [&](std::size_t c) {
    const std::size_t s = c / runs, r = c % runs;
    const std::uint64_t seed = mc_cell_seed(config.base_seed, s, r);
    report.seeds[s][r] = seed;
    try {
      const Phantom ph = make_phantom(config.phantom, config.paradigm, derive_seed(seed, {1}));
      const Dataset ds = synthesize_dataset(ph.grid, ph.truth, ph.paradigm, config.drift, config.noise_grid[s],
                                            derive_seed(seed, {2}), Execution::serial);
      const FeatureMap fm = extract_features(ds, design, Execution::serial);
      for (std::size_t mi = 0; mi < std::size(methods); ++mi) {
        const auto start = std::chrono::steady_clock::now();
        const ParcelState state = parcellate(methods[mi], fm, config.target_parcels, {Execution::serial, nullptr});
        const auto stop = std::chrono::steady_clock::now();
        McSample& out = report.samples[mi][s][r];
        const Labels labels = state.compact_labels();
        out.mi = mutual_information(labels, ph.truth.parcel_labels);
        out.lumping = inactive_lumping(labels, ph.truth.activation_labels);
        out.wall_ms =
            config.record_timing ? std::chrono::duration<double, std::milli>(stop - start).count() : 0.0;
        if (config.compute_mse) {
          const HrfRefit refit = als_hrf_refit(ds, labels, config.refit, Execution::serial);
          out.mse = detection_mse(refit.amplitudes[0], ph.truth.amplitudes[0]);
        }
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  const auto total = static_cast<std::ptrdiff_t>(cells);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < total; ++c) cell(static_cast<std::size_t>(c));
  } else {
    for (std::ptrdiff_t c = 0; c < total; ++c) cell(static_cast<std::size_t>(c));
  }
  for (std::size_t c = 0; c < cells; ++c)
    if (errors[c])
      rethrow_tagged(errors[c], "sigma2=" + std::to_string(config.noise_grid[c / runs]) +
                                    ", run=" + std::to_string(c % runs) + ": ");
  return report;
}

}  // namespace hemopar
