#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hemopar/execution.hpp"
#include "hemopar/glm.hpp"
#include "hemopar/grid.hpp"

namespace hemopar {

// Two-class Gaussian mixture of one parcel. Class 1 is "activated", class 0
// "not activated"; voxels contribute to class i with weight alpha (i = 1) or
// 1 - alpha (i = 0).
struct MixtureParams {
  std::array<double, 2> lambda{0.5, 0.5};
  std::array<Eigen::Vector2d, 2> mu{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  std::array<Eigen::Matrix2d, 2> sigma{Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
};

// Class weight mass below which a class falls back to unweighted moments.
inline constexpr double kDegenerateMass = 1e-6;
inline constexpr double kRidgeScale = 1e-4;

// Diagonal loading added to every mixture covariance: 1e-4 times the mean
// per-dimension feature variance over the whole map (1e-4 if that is zero).
double covariance_ridge(const FeatureMap& features);

MixtureParams weighted_mixture_fit(std::span<const std::size_t> members, const FeatureMap& features, double ridge);
MixtureParams weighted_mixture_fit(std::span<const std::size_t> members, const FeatureMap& features);

// log N(x; mu, sigma) for a 2x2 covariance. Throws NumericalError if sigma is
// not positive definite.
double log_gaussian2(const Eigen::Vector2d& x, const Eigen::Vector2d& mu, const Eigen::Matrix2d& sigma);

// sum_j log(lambda0 N(phi_j; mu0, S0) + lambda1 N(phi_j; mu1, S1)).
double mixture_loglik(std::span<const std::size_t> members, const MixtureParams& params, const FeatureMap& features);

// Agglomeration state. Parcel ids are voxel indices: a parcel is named after
// the smallest voxel it contains, so ids stay stable under merges.
class ParcelState {
public:
  ParcelState() = default;
  explicit ParcelState(const Grid2D& grid);  // singletons

  const Grid2D& grid() const noexcept { return grid_; }
  std::size_t parcel_count() const noexcept { return alive_count_; }
  bool alive(std::size_t id) const noexcept { return id < members_.size() && !members_[id].empty(); }

  // Per-voxel parcel id.
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  // Sorted voxel indices of a live parcel.
  const std::vector<std::size_t>& members(std::size_t id) const { return members_.at(id); }
  const std::set<std::size_t>& neighbors(std::size_t id) const { return adjacency_.at(id); }
  bool adjacent(std::size_t a, std::size_t b) const;
  std::vector<std::size_t> parcel_ids() const;

  // Sorted union of two parcels' members, without mutating the state.
  std::vector<std::size_t> merged_members(std::size_t a, std::size_t b) const;

  // Merges b into a (or a into b), returning the surviving id min(a, b).
  std::size_t merge(std::size_t a, std::size_t b);

  // Labels renumbered 0..count-1 in order of each parcel's smallest voxel.
  std::vector<int> compact_labels() const;

  const MixtureParams* cached_params(std::size_t id) const;
  double cached_loglik(std::size_t id) const { return loglik_.at(id); }
  void cache(std::size_t id, MixtureParams params, double loglik);

private:
  Grid2D grid_;
  std::vector<std::size_t> labels_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::set<std::size_t>> adjacency_;
  std::vector<MixtureParams> params_;
  std::vector<double> loglik_;
  std::vector<char> has_params_;
  std::size_t alive_count_ = 0;
};

struct MergeCandidate {
  std::size_t first = 0;    // min id
  std::size_t second = 0;   // max id
  double gain = 0.0;
  MixtureParams merged_params;
  double merged_loglik = 0.0;
};

// Log-likelihood ratio of the merged parcellation over the current one,
// each side at its own weighted-mixture estimate:
//   gain = L(a u b) - L(a) - L(b).
// It is <= 0 in practice; the greedy step takes the largest gain, i.e. the
// merge that loses the least classification likelihood.
MergeCandidate merge_gain(const ParcelState& state, std::size_t a, std::size_t b, const FeatureMap& features,
                          double ridge);
MergeCandidate merge_gain(const ParcelState& state, std::size_t a, std::size_t b, const FeatureMap& features);

struct MergeRecord {
  std::size_t step = 0;
  std::size_t first = 0;
  std::size_t second = 0;
  double score = 0.0;  // IGMM gain, or Ward merge cost
};

struct AgglomerationOptions {
  Execution exec = Execution::parallel;
  std::vector<MergeRecord>* merge_log = nullptr;
};

ParcelState igmm_agglomerate(const FeatureMap& features, std::size_t target_parcels,
                             const AgglomerationOptions& options = {});

// Ward merge cost of two parcels with unweighted feature means.
double ward_cost(std::size_t n_a, const Eigen::Vector2d& mean_a, std::size_t n_b, const Eigen::Vector2d& mean_b);

ParcelState spatial_ward(const FeatureMap& features, std::size_t target_parcels,
                         const AgglomerationOptions& options = {});

enum class Method { igmm, sw };
Method parse_method(const std::string& name);
std::string to_string(Method method);

ParcelState parcellate(Method method, const FeatureMap& features, std::size_t target_parcels,
                       const AgglomerationOptions& options = {});

}  // namespace hemopar
