#include <doctest.h>

#include <cmath>

#include "hemopar/errors.hpp"
#include "hemopar/eval.hpp"
#include "hemopar/rng.hpp"
#include "oracles.hpp"

using namespace hemopar;

namespace {

Labels random_labels(std::size_t n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Labels l(n);
  for (auto& v : l) v = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(classes));
  return l;
}

// Two 10x10 territories side by side, fully active, fixed amplitude.
McConfig separable_config() {
  McConfig c;
  c.phantom.width = 20;
  c.phantom.height = 10;
  c.phantom.tiles_x = 2;
  c.phantom.tiles_y = 1;
  BezierHrfSpec early, late;
  early.time_to_peak = 4.0;
  early.time_to_undershoot = 10.0;
  late.time_to_peak = 9.0;
  late.time_to_undershoot = 15.0;
  c.phantom.hrfs = {early, late};
  c.phantom.blobs = {{9.5, 4.5, 100.0}};
  c.phantom.amplitude = {1.8, 0.0};
  c.paradigm = default_paradigm();
  c.noise_grid = {0.0};
  c.runs = 1;
  c.target_parcels = 2;
  c.base_seed = 5;
  return c;
}

}  // namespace

TEST_CASE("mutual information of simple labelings") {
  const Labels a{0, 0, 1, 1};
  CHECK(mutual_information(a, a) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(mutual_information(a, Labels{3, 3, 3, 3}) == 0.0);
  CHECK(mutual_information(Labels{5, 5, 5, 5}, a) == 0.0);
  CHECK_THROWS_AS(mutual_information(a, Labels{0, 1}), DataError);
}

TEST_CASE("mutual information equals the entropy identity") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Labels a = random_labels(400, 3, seed), b = random_labels(400, 4, seed + 100);
    const ContingencyTable t = ContingencyTable::build(a, b);
    CHECK(t.counts.rows() == 3);
    CHECK(t.counts.cols() == 4);
    CHECK(t.counts.sum() == 400.0);
    const double ref = oracle::entropy(a) + oracle::entropy(b) - oracle::joint_entropy(a, b);
    CHECK(std::abs(mutual_information(a, b) - ref) < 1e-12);
  }
}

TEST_CASE("mutual information symmetry, self-information and permutation invariance") {
  const Labels a = random_labels(300, 5, 1), b = random_labels(300, 3, 2);
  CHECK(mutual_information(a, b) == mutual_information(b, a));
  CHECK(std::abs(mutual_information(a, a) - entropy(a)) < 1e-12);
  CHECK(std::abs(entropy(a) - oracle::entropy(a)) < 1e-12);
  CHECK(mutual_information(a, b) >= 0.0);

  const int perm[] = {3, 0, 4, 1, 2};
  Labels pa = a;
  for (auto& v : pa) v = 10 * perm[v] + 7;
  CHECK(std::abs(mutual_information(pa, b) - mutual_information(a, b)) < 1e-12);
  CHECK(std::abs(mutual_information(b, pa) - mutual_information(b, a)) < 1e-12);
}

TEST_CASE("detection mse") {
  const std::vector<double> truth{1.0, 0.0, 2.5, -0.5};
  CHECK(detection_mse(truth, truth) == 0.0);
  CHECK(detection_mse(std::vector<double>(4, 0.0), truth) == doctest::Approx(1.0).epsilon(1e-15));
  for (double c : {0.0, 0.5, 1.0, 3.0, -2.0}) {
    std::vector<double> scaled = truth;
    for (auto& v : scaled) v *= c;
    CHECK(detection_mse(scaled, truth) == doctest::Approx((c - 1) * (c - 1)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(detection_mse(truth, std::vector<double>(4, 0.0)), DataError);
  CHECK_THROWS_AS(detection_mse({1.0}, truth), DataError);
}

TEST_CASE("inactive lumping") {
  const Labels labels{0, 0, 0, 1, 1, 2};
  const std::vector<int> act{0, 0, 1, 0, 1, 0};
  // Largest parcel 0 holds 2 of the 4 inactive voxels.
  CHECK(inactive_lumping(labels, act) == 0.5);
}

TEST_CASE("noiseless refit recovers every parcel hrf and amplitude") {
  const Phantom ph = default_phantom(31);
  const Dataset ds = synthesize_dataset(ph.grid, ph.truth, ph.paradigm, DriftSpec{}, 0.0, 77);
  const HrfRefit fit = als_hrf_refit(ds, ph.truth.parcel_labels, RefitOptions{});
  REQUIRE(fit.parcels.size() == 4);
  for (const auto& p : fit.parcels) {
    const auto& truth = ph.truth.hrfs[p.label].samples;
    REQUIRE(p.hrf.samples.size() == truth.size());
    double worst = 0.0, peak = 0.0;
    for (std::size_t d = 0; d < truth.size(); ++d) {
      worst = std::max(worst, std::abs(p.hrf.samples[d] - truth[d]));
      peak = std::max(peak, std::abs(p.hrf.samples[d]));
    }
    CHECK(worst < 1e-6);
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-15));
    for (std::size_t i = 1; i < p.residual_trace.size(); ++i)
      CHECK(p.residual_trace[i] <= p.residual_trace[i - 1] + 1e-12 * p.residual_trace.front());
  }
  for (std::size_t j = 0; j < ph.grid.size(); ++j)
    CHECK(std::abs(fit.amplitudes[0][j] - ph.truth.amplitudes[0][j]) < 1e-6);
}

TEST_CASE("noisy refit residual never increases") {
  const Phantom ph = default_phantom(32);
  const Dataset ds = synthesize_dataset(ph.grid, ph.truth, ph.paradigm, DriftSpec{}, 1.5, 78);
  RefitOptions opt;
  opt.tol = 0.0;
  opt.max_iters = 30;
  const HrfRefit fit = als_hrf_refit(ds, ph.truth.parcel_labels, opt);
  for (const auto& p : fit.parcels) {
    CHECK(p.iterations >= 1);
    for (std::size_t i = 1; i < p.residual_trace.size(); ++i)
      CHECK(p.residual_trace[i] <= p.residual_trace[i - 1] * (1.0 + 1e-12));
  }
}

TEST_CASE("two-condition refit separates the amplitudes") {
  const Paradigm p = generate_paradigm(600, 1.0, 0.5, 2, 3.0, 7.0, 2.0, 19);
  const Phantom ph = make_phantom(default_phantom_spec(), p, 4);
  const Dataset ds = synthesize_dataset(ph.grid, ph.truth, p, DriftSpec{}, 0.0, 8);
  const HrfRefit fit = als_hrf_refit(ds, ph.truth.parcel_labels, RefitOptions{});
  REQUIRE(fit.amplitudes.size() == 2);
  for (int m = 0; m < 2; ++m)
    for (std::size_t j = 0; j < ph.grid.size(); ++j)
      CHECK(std::abs(fit.amplitudes[m][j] - ph.truth.amplitudes[m][j]) < 1e-6);
}

TEST_CASE("a parcel without excitation is rejected by name") {
  const Phantom ph = default_phantom(33);
  GroundTruth truth = ph.truth;
  for (std::size_t j = 0; j < ph.grid.size(); ++j)
    if (truth.parcel_labels[j] == 2) truth.amplitudes[0][j] = 0.0;
  const Dataset ds = synthesize_dataset(ph.grid, truth, ph.paradigm, DriftSpec{4, 0.0}, 0.0, 1);
  try {
    als_hrf_refit(ds, truth.parcel_labels, RefitOptions{});
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("parcel 2") != std::string::npos);
  }
}

TEST_CASE("refit input checks") {
  const Phantom ph = default_phantom(1);
  const Dataset ds = synthesize_dataset(ph.grid, ph.truth, ph.paradigm, DriftSpec{}, 1.0, 1);
  CHECK_THROWS_AS(als_hrf_refit(ds, Labels(10, 0), RefitOptions{}), DataError);
  RefitOptions bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(als_hrf_refit(ds, ph.truth.parcel_labels, bad), ConfigError);
}

TEST_CASE("monte carlo recovers a separable phantom exactly") {
  const McConfig c = separable_config();
  const McReport r = monte_carlo(c);
  const Phantom ph = make_phantom(c.phantom, c.paradigm, 0);
  const double h = entropy(ph.truth.parcel_labels);
  CHECK(h == doctest::Approx(std::log(2.0)));
  const auto igmm = r.method_index("igmm");
  CHECK(std::abs(r.samples[igmm][0][0].mi - h) < 1e-12);
}

TEST_CASE("monte carlo cells depend only on their position") {
  McConfig c;
  c.phantom = default_phantom_spec();
  c.paradigm = default_paradigm();
  c.noise_grid = {0.5, 2.0};
  c.runs = 3;
  c.base_seed = 99;
  c.compute_mse = true;
  const McReport a = monte_carlo(c, Execution::serial);
  const McReport again = monte_carlo(c, Execution::serial);
  McConfig fewer = c;
  fewer.runs = 2;
  const McReport b = monte_carlo(fewer, Execution::serial);
  REQUIRE(a.samples.size() == 2);
  CHECK(a.methods == std::vector<std::string>{"sw", "igmm"});
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t s = 0; s < 2; ++s) {
      REQUIRE(a.samples[m][s].size() == 3);
      for (std::size_t r = 0; r < 3; ++r) {
        CHECK(a.samples[m][s][r].mi == again.samples[m][s][r].mi);
        CHECK(a.samples[m][s][r].mse == again.samples[m][s][r].mse);
        CHECK(a.samples[m][s][r].wall_ms == 0.0);
        CHECK(a.samples[m][s][r].mse > 0.0);
      }
      for (std::size_t r = 0; r < 2; ++r) {
        CHECK(a.samples[m][s][r].mi == b.samples[m][s][r].mi);
        CHECK(a.samples[m][s][r].mse == b.samples[m][s][r].mse);
      }
    }
  CHECK(a.seeds[1][2] == mc_cell_seed(99, 1, 2));

  const McSummary sum = a.mi_summary(1, 0);
  double mean = 0.0;
  for (const auto& x : a.samples[1][0]) mean += x.mi / 3.0;
  CHECK(sum.mean == doctest::Approx(mean));
  CHECK(sum.stderr_ == doctest::Approx(sum.stddev / std::sqrt(3.0)));
}

TEST_CASE("monte carlo errors carry the cell") {
  McConfig c = separable_config();
  c.noise_grid = {0.0, 1.0};
  c.target_parcels = 1000;
  try {
    monte_carlo(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("sigma2=0", 0) == 0);
    CHECK(std::string(e.what()).find("run=0") != std::string::npos);
  }
  McConfig none = separable_config();
  none.runs = 0;
  CHECK_THROWS_AS(monte_carlo(none), ConfigError);
}
