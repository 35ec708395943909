#include <doctest.h>

#include <cstring>

#include "hemopar/eval.hpp"
#include "hemopar/execution.hpp"
#include "hemopar/glm.hpp"
#include "hemopar/parcellation.hpp"
#include "hemopar/simgen.hpp"

using namespace hemopar;

namespace {

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

struct Threads {
  explicit Threads(int n) { set_thread_count(n); }
  ~Threads() { set_thread_count(0); }
};

}  // namespace

TEST_CASE("serial and parallel kernels agree bit for bit") {
  const Phantom ph = default_phantom(41);
  const Dataset s = [&] {
    const Threads one(1);
    return synthesize_dataset(ph.grid, ph.truth, ph.paradigm, DriftSpec{}, 2.0, 42, Execution::serial);
  }();
  const Threads threads(4);
  REQUIRE(thread_count() == 4);
  const Dataset p = synthesize_dataset(ph.grid, ph.truth, ph.paradigm, DriftSpec{}, 2.0, 42, Execution::parallel);
  CHECK(same_bits(s.y, p.y));
  CHECK(same_bits(s.drift_coeffs, p.drift_coeffs));

  const DesignMatrix design = build_glm_design(s.paradigm, canonical_hrf_basis(1.0, 0.5, 32.0), 4);
  const FeatureMap fs_ = extract_features(s, design, Execution::serial);
  const FeatureMap fp = extract_features(s, design, Execution::parallel);
  CHECK(fs_.phi == fp.phi);
  CHECK(fs_.alpha == fp.alpha);

  for (Method m : {Method::igmm, Method::sw}) {
    std::vector<MergeRecord> ls, lp;
    const auto a = parcellate(m, fs_, 4, {Execution::serial, &ls}).compact_labels();
    const auto b = parcellate(m, fs_, 4, {Execution::parallel, &lp}).compact_labels();
    CHECK(a == b);
    REQUIRE(ls.size() == lp.size());
    for (std::size_t i = 0; i < ls.size(); ++i) {
      CHECK(ls[i].first == lp[i].first);
      CHECK(ls[i].second == lp[i].second);
      CHECK(ls[i].score == lp[i].score);
    }

    const HrfRefit rs = [&] {
      const Threads one(1);
      return als_hrf_refit(s, a, RefitOptions{}, Execution::serial);
    }();
    set_thread_count(4);
    const HrfRefit rp = als_hrf_refit(s, a, RefitOptions{}, Execution::parallel);
    CHECK(rs.amplitudes == rp.amplitudes);
    REQUIRE(rs.parcels.size() == rp.parcels.size());
    for (std::size_t g = 0; g < rs.parcels.size(); ++g) {
      CHECK(rs.parcels[g].hrf == rp.parcels[g].hrf);
      CHECK(rs.parcels[g].residual_trace == rp.parcels[g].residual_trace);
    }
  }
}

TEST_CASE("monte carlo is independent of the thread count") {
  McConfig c;
  c.phantom = default_phantom_spec();
  c.paradigm = default_paradigm();
  c.noise_grid = {0.5, 3.0};
  c.runs = 4;
  c.base_seed = 7;
  const McReport serial = monte_carlo(c, Execution::serial);
  for (int n : {1, 3, 4}) {
    const Threads threads(n);
    const McReport par = monte_carlo(c, Execution::parallel);
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t r = 0; r < 4; ++r) {
          CHECK(serial.samples[m][s][r].mi == par.samples[m][s][r].mi);
          CHECK(serial.samples[m][s][r].mse == par.samples[m][s][r].mse);
          CHECK(serial.samples[m][s][r].lumping == par.samples[m][s][r].lumping);
        }
    CHECK(serial.seeds == par.seeds);
  }
}
