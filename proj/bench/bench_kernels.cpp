#include <benchmark/benchmark.h>

#include "hemopar/eval.hpp"
#include "hemopar/execution.hpp"
#include "hemopar/glm.hpp"
#include "hemopar/parcellation.hpp"
#include "hemopar/simgen.hpp"

using namespace hemopar;

namespace {

struct Fixture {
  Phantom phantom = default_phantom(1);
  Dataset dataset = synthesize_dataset(phantom.grid, phantom.truth, phantom.paradigm, DriftSpec{}, 1.5, 2);
  DesignMatrix design = build_glm_design(dataset.paradigm, canonical_hrf_basis(1.0, 0.5, 32.0), 4);
  FeatureMap features = extract_features(dataset, design);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::parallel : Execution::serial; }

// range(0): 0 serial reference, 1 OpenMP kernel
void BM_Synthesize(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        synthesize_dataset(f.phantom.grid, f.phantom.truth, f.phantom.paradigm, DriftSpec{}, 1.5, 3, mode(state)));
}

void BM_Features(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(extract_features(f.dataset, f.design, mode(state)));
}

void BM_Igmm(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(igmm_agglomerate(f.features, 4, {mode(state), nullptr}));
}

void BM_SpatialWard(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(spatial_ward(f.features, 4, {mode(state), nullptr}));
}

void BM_Refit(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(als_hrf_refit(f.dataset, f.phantom.truth.parcel_labels, RefitOptions{}, mode(state)));
}

void BM_MonteCarlo(benchmark::State& state) {
  McConfig c;
  c.phantom = default_phantom_spec();
  c.paradigm = default_paradigm();
  c.noise_grid = {1.0, 5.0};
  c.runs = 4;
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo(c, mode(state)));
}

}  // namespace

BENCHMARK(BM_Synthesize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Features)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Igmm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpatialWard)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Refit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarlo)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
