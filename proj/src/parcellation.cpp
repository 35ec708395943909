#include "hemopar/parcellation.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <utility>

#include "hemopar/errors.hpp"

namespace hemopar {

double covariance_ridge(const FeatureMap& features) {
  const std::size_t n = features.size();
  if (n == 0) return kRidgeScale;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : features.phi) mean += p;
  mean /= static_cast<double>(n);
  Eigen::Vector2d var = Eigen::Vector2d::Zero();
  for (const auto& p : features.phi) var += (p - mean).cwiseAbs2();
  var /= static_cast<double>(n);
  const double mean_var = 0.5 * var.sum();
  return mean_var > 0.0 ? kRidgeScale * mean_var : kRidgeScale;
}

MixtureParams weighted_mixture_fit(std::span<const std::size_t> members, const FeatureMap& features, double ridge) {
  if (members.empty()) throw ConfigError("cannot fit a mixture to an empty parcel");
  const double n = static_cast<double>(members.size());

  double alpha_sum = 0.0;
  for (auto j : members) alpha_sum += features.alpha[j];

  MixtureParams out;
  out.lambda[1] = alpha_sum / n;
  out.lambda[0] = 1.0 - out.lambda[1];

  // Unweighted moments, only needed when a class has no weight mass.
  auto unweighted = [&] {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (auto j : members) mean += features.phi[j];
    mean /= n;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (auto j : members) {
      const Eigen::Vector2d d = features.phi[j] - mean;
      cov.noalias() += d * d.transpose();
    }
    return std::pair{mean, Eigen::Matrix2d(cov / n)};
  };

  for (int cls = 0; cls < 2; ++cls) {
    auto weight = [&](std::size_t j) { return cls == 1 ? features.alpha[j] : 1.0 - features.alpha[j]; };
    double mass = 0.0;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    for (auto j : members) {
      const double w = weight(j);
      mass += w;
      sum += w * features.phi[j];
    }
    if (mass < kDegenerateMass) {
      std::tie(out.mu[cls], out.sigma[cls]) = unweighted();
    } else {
      out.mu[cls] = sum / mass;
      Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
      for (auto j : members) {
        const Eigen::Vector2d d = features.phi[j] - out.mu[cls];
        scatter.noalias() += weight(j) * (d * d.transpose());
      }
      out.sigma[cls] = scatter / mass;
    }
    out.sigma[cls].diagonal().array() += ridge;
  }
  return out;
}

MixtureParams weighted_mixture_fit(std::span<const std::size_t> members, const FeatureMap& features) {
  return weighted_mixture_fit(members, features, covariance_ridge(features));
}

namespace {

struct GaussianTerm {
  double log_norm = -std::numeric_limits<double>::infinity();  // log lambda - log(2 pi) - log|S|/2
  Eigen::Matrix2d precision = Eigen::Matrix2d::Zero();
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  bool active = false;
};

GaussianTerm make_term(double lambda, const Eigen::Vector2d& mu, const Eigen::Matrix2d& sigma) {
  const double a = sigma(0, 0), d = sigma(1, 1), b = 0.5 * (sigma(0, 1) + sigma(1, 0));
  const double det = a * d - b * b;
  if (!(a > 0.0) || !(det > 0.0) || !std::isfinite(det))
    throw NumericalError("mixture covariance is not positive definite");
  GaussianTerm t;
  t.mu = mu;
  t.precision << d / det, -b / det, -b / det, a / det;
  if (lambda > 0.0) {
    t.active = true;
    t.log_norm = std::log(lambda) - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
  }
  return t;
}

double quad(const GaussianTerm& t, const Eigen::Vector2d& x) {
  const Eigen::Vector2d d = x - t.mu;
  return d.dot(t.precision * d);
}

}  // namespace

double log_gaussian2(const Eigen::Vector2d& x, const Eigen::Vector2d& mu, const Eigen::Matrix2d& sigma) {
  const GaussianTerm t = make_term(1.0, mu, sigma);
  return t.log_norm - 0.5 * quad(t, x);
}

double mixture_loglik(std::span<const std::size_t> members, const MixtureParams& params, const FeatureMap& features) {
  const GaussianTerm t0 = make_term(params.lambda[0], params.mu[0], params.sigma[0]);
  const GaussianTerm t1 = make_term(params.lambda[1], params.mu[1], params.sigma[1]);
  if (!t0.active && !t1.active) throw NumericalError("mixture has no class with positive weight");
  double total = 0.0;
  for (auto j : members) {
    const Eigen::Vector2d& x = features.phi[j];
    const double l0 = t0.active ? t0.log_norm - 0.5 * quad(t0, x) : -std::numeric_limits<double>::infinity();
    const double l1 = t1.active ? t1.log_norm - 0.5 * quad(t1, x) : -std::numeric_limits<double>::infinity();
    const double hi = std::max(l0, l1), lo = std::min(l0, l1);
    total += hi + std::log1p(std::exp(lo - hi));
  }
  return total;
}

// ---------------------------------------------------------------------------
// ParcelState

ParcelState::ParcelState(const Grid2D& grid) : grid_(grid) {
  const std::size_t n = grid.size();
  labels_.resize(n);
  members_.resize(n);
  adjacency_.resize(n);
  params_.resize(n);
  loglik_.assign(n, 0.0);
  has_params_.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    labels_[j] = j;
    members_[j] = {j};
    for (auto k : grid.neighbors(j)) adjacency_[j].insert(k);
  }
  alive_count_ = n;
}

bool ParcelState::adjacent(std::size_t a, std::size_t b) const {
  return alive(a) && alive(b) && adjacency_[a].count(b) > 0;
}

std::vector<std::size_t> ParcelState::parcel_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(alive_count_);
  for (std::size_t id = 0; id < members_.size(); ++id)
    if (!members_[id].empty()) ids.push_back(id);
  return ids;
}

std::vector<std::size_t> ParcelState::merged_members(std::size_t a, std::size_t b) const {
  const auto& ma = members_.at(a);
  const auto& mb = members_.at(b);
  std::vector<std::size_t> out;
  out.reserve(ma.size() + mb.size());
  std::merge(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(out));
  return out;
}

std::size_t ParcelState::merge(std::size_t a, std::size_t b) {
  if (!adjacent(a, b)) throw ConfigError("parcels " + std::to_string(a) + " and " + std::to_string(b) + " are not adjacent");
  const std::size_t keep = std::min(a, b), gone = std::max(a, b);
  members_[keep] = merged_members(keep, gone);
  for (auto j : members_[gone]) labels_[j] = keep;
  members_[gone].clear();
  members_[gone].shrink_to_fit();
  for (auto n : adjacency_[gone]) {
    adjacency_[n].erase(gone);
    if (n != keep) {
      adjacency_[n].insert(keep);
      adjacency_[keep].insert(n);
    }
  }
  adjacency_[gone].clear();
  adjacency_[keep].erase(gone);
  has_params_[keep] = 0;
  has_params_[gone] = 0;
  --alive_count_;
  return keep;
}

std::vector<int> ParcelState::compact_labels() const {
  std::vector<int> remap(members_.size(), -1);
  int next = 0;
  for (std::size_t id = 0; id < members_.size(); ++id)
    if (!members_[id].empty()) remap[id] = next++;
  std::vector<int> out(labels_.size());
  for (std::size_t j = 0; j < labels_.size(); ++j) out[j] = remap[labels_[j]];
  return out;
}

const MixtureParams* ParcelState::cached_params(std::size_t id) const {
  return id < has_params_.size() && has_params_[id] ? &params_[id] : nullptr;
}

void ParcelState::cache(std::size_t id, MixtureParams params, double loglik) {
  params_.at(id) = std::move(params);
  loglik_.at(id) = loglik;
  has_params_.at(id) = 1;
}

// ---------------------------------------------------------------------------
// IGMM merge criterion

namespace {

double parcel_loglik(const ParcelState& state, std::size_t id, const FeatureMap& features, double ridge) {
  if (state.cached_params(id)) return state.cached_loglik(id);
  const auto& m = state.members(id);
  return mixture_loglik(m, weighted_mixture_fit(m, features, ridge), features);
}

}  // namespace

MergeCandidate merge_gain(const ParcelState& state, std::size_t a, std::size_t b, const FeatureMap& features,
                          double ridge) {
  if (!state.adjacent(a, b))
    throw ConfigError("merge candidates must be adjacent parcels (" + std::to_string(a) + ", " + std::to_string(b) + ")");
  MergeCandidate c;
  c.first = std::min(a, b);
  c.second = std::max(a, b);
  const auto merged = state.merged_members(c.first, c.second);
  c.merged_params = weighted_mixture_fit(merged, features, ridge);
  c.merged_loglik = mixture_loglik(merged, c.merged_params, features);
  const double separate = parcel_loglik(state, c.first, features, ridge) + parcel_loglik(state, c.second, features, ridge);
  c.gain = c.merged_loglik - separate;
  return c;
}

MergeCandidate merge_gain(const ParcelState& state, std::size_t a, std::size_t b, const FeatureMap& features) {
  return merge_gain(state, a, b, features, covariance_ridge(features));
}

double ward_cost(std::size_t n_a, const Eigen::Vector2d& mean_a, std::size_t n_b, const Eigen::Vector2d& mean_b) {
  const double na = static_cast<double>(n_a), nb = static_cast<double>(n_b);
  return na * nb / (na + nb) * (mean_a - mean_b).squaredNorm();
}

// ---------------------------------------------------------------------------
// Greedy agglomeration engine shared by IGMM and spatial Ward.

namespace {

using PairKey = std::pair<std::size_t, std::size_t>;

struct IgmmCriterion {
  const FeatureMap& features;
  double ridge;

  static constexpr bool maximize = true;
  using Candidate = MergeCandidate;

  void init(ParcelState& state) const {
    for (std::size_t id = 0; id < features.size(); ++id) {
      const auto& m = state.members(id);
      auto params = weighted_mixture_fit(m, features, ridge);
      const double ll = mixture_loglik(m, params, features);
      state.cache(id, std::move(params), ll);
    }
  }
  Candidate evaluate(const ParcelState& state, std::size_t a, std::size_t b) const {
    return merge_gain(state, a, b, features, ridge);
  }
  static double score(const Candidate& c) { return c.gain; }
  void commit(ParcelState& state, std::size_t keep, Candidate& c) const {
    state.cache(keep, std::move(c.merged_params), c.merged_loglik);
  }
};

struct WardCriterion {
  std::vector<Eigen::Vector2d> sums;
  std::vector<std::size_t> counts;

  struct Candidate {
    std::size_t first = 0, second = 0;
    double cost = 0.0;
  };
  static constexpr bool maximize = false;

  explicit WardCriterion(const FeatureMap& features) : sums(features.phi), counts(features.size(), 1) {}

  void init(ParcelState&) const {}
  Eigen::Vector2d mean(std::size_t id) const { return sums[id] / static_cast<double>(counts[id]); }
  Candidate evaluate(const ParcelState& state, std::size_t a, std::size_t b) const {
    if (!state.adjacent(a, b)) throw ConfigError("Ward candidates must be adjacent parcels");
    const std::size_t lo = std::min(a, b), hi = std::max(a, b);
    return {lo, hi, ward_cost(counts[lo], mean(lo), counts[hi], mean(hi))};
  }
  static double score(const Candidate& c) { return c.cost; }
  void commit(ParcelState&, std::size_t keep, Candidate& c) {
    const std::size_t other = keep == c.first ? c.second : c.first;
    sums[keep] += sums[other];
    counts[keep] += counts[other];
  }
};

template <class Criterion>
void evaluate_pairs(const Criterion& crit, const ParcelState& state, const std::vector<PairKey>& pairs,
                    std::vector<typename Criterion::Candidate>& out, Execution exec) {
  out.resize(pairs.size());
  const auto count = static_cast<std::ptrdiff_t>(pairs.size());
  if (exec == Execution::parallel && count > 1) {
    std::string failure;
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        out[static_cast<std::size_t>(i)] = crit.evaluate(state, pairs[static_cast<std::size_t>(i)].first,
                                                         pairs[static_cast<std::size_t>(i)].second);
      } catch (const std::exception& e) {
#pragma omp critical(hemopar_merge_failure)
        failure = e.what();
      }
    }
    if (!failure.empty()) throw NumericalError(failure);
  } else {
    for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = crit.evaluate(state, pairs[i].first, pairs[i].second);
  }
}

template <class Criterion>
ParcelState agglomerate(const FeatureMap& features, std::size_t target, const AgglomerationOptions& options,
                        Criterion& crit) {
  features.validate();
  const std::size_t voxels = features.size();
  if (target < 1 || target > voxels)
    throw ConfigError("target parcel count " + std::to_string(target) + " must lie in [1, " + std::to_string(voxels) + "]");

  ParcelState state(features.grid);
  crit.init(state);

  using Candidate = typename Criterion::Candidate;
  std::map<PairKey, Candidate> candidates;
  std::vector<PairKey> pending = features.grid.edges();
  std::vector<Candidate> scored;
  evaluate_pairs(crit, state, pending, scored, options.exec);
  for (std::size_t i = 0; i < pending.size(); ++i) candidates.emplace(pending[i], std::move(scored[i]));

  std::size_t step = 0;
  while (state.parcel_count() > target) {
    auto best = candidates.end();
    for (auto it = candidates.begin(); it != candidates.end(); ++it) {
      const double s = Criterion::score(it->second);
      if (std::isnan(s)) continue;
      if (best == candidates.end() ||
          (Criterion::maximize ? s > Criterion::score(best->second) : s < Criterion::score(best->second)))
        best = it;
    }
    if (best == candidates.end()) throw NumericalError("no admissible merge left before reaching the target count");

    const auto [a, b] = best->first;
    Candidate chosen = std::move(best->second);
    if (options.merge_log) options.merge_log->push_back({step, a, b, Criterion::score(chosen)});

    for (auto id : {a, b})
      for (auto n : state.neighbors(id)) candidates.erase({std::min(id, n), std::max(id, n)});

    const std::size_t keep = state.merge(a, b);
    crit.commit(state, keep, chosen);

    pending.clear();
    for (auto n : state.neighbors(keep)) pending.emplace_back(std::min(keep, n), std::max(keep, n));
    evaluate_pairs(crit, state, pending, scored, options.exec);
    for (std::size_t i = 0; i < pending.size(); ++i) candidates.insert_or_assign(pending[i], std::move(scored[i]));
    ++step;
  }
  return state;
}

}  // namespace

ParcelState igmm_agglomerate(const FeatureMap& features, std::size_t target_parcels, const AgglomerationOptions& options) {
  IgmmCriterion crit{features, covariance_ridge(features)};
  return agglomerate(features, target_parcels, options, crit);
}

ParcelState spatial_ward(const FeatureMap& features, std::size_t target_parcels, const AgglomerationOptions& options) {
  WardCriterion crit(features);
  return agglomerate(features, target_parcels, options, crit);
}

Method parse_method(const std::string& name) {
  if (name == "igmm") return Method::igmm;
  if (name == "sw") return Method::sw;
  throw ConfigError("unknown parcellation method '" + name + "' (expected igmm or sw)");
}

std::string to_string(Method method) { return method == Method::igmm ? "igmm" : "sw"; }

ParcelState parcellate(Method method, const FeatureMap& features, std::size_t target_parcels,
                       const AgglomerationOptions& options) {
  return method == Method::igmm ? igmm_agglomerate(features, target_parcels, options)
                                : spatial_ward(features, target_parcels, options);
}

}  // namespace hemopar
