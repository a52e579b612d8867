#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "spoi/forward.hpp"
#include "spoi/model/spoi_ae.hpp"
#include "spoi/nmf.hpp"
#include "spoi/nnls.hpp"
#include "spoi/pixel_batch.hpp"
#include "spoi/rng.hpp"
#include "spoi/spectra.hpp"
#include "spoi/types.hpp"
#include "spoi/wavelength_grid.hpp"

namespace {

spoi::Matd random_matrix(spoi::Rng& rng, spoi::Index rows, spoi::Index cols, double lo,
                         double hi) {
  spoi::Matd m(rows, cols);
  for (spoi::Index r = 0; r < rows; ++r) {
    for (spoi::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  }
  return m;
}

spoi::WavelengthGrid bench_grid() {
  std::vector<double> nm;
  for (double w = 700.0; w <= 900.0; w += 20.0) nm.push_back(w);
  return spoi::WavelengthGrid(nm);
}

spoi::OpticalFields random_fields(spoi::Rng& rng, spoi::Index pixels, spoi::Index wavelengths) {
  spoi::OpticalFields fields;
  fields.mu_a = random_matrix(rng, pixels, wavelengths, 1e-3, 1.0);
  fields.mu_s_prime = random_matrix(rng, pixels, wavelengths, 0.5, 2.5);
  return fields;
}

spoi::FluenceParams random_fluence(spoi::Rng& rng, spoi::Index pixels,
                                   spoi::Index wavelengths) {
  spoi::FluenceParams params;
  params.gamma_phi0 = random_matrix(rng, 1, wavelengths, 0.5, 2.0);
  params.depths = random_matrix(rng, pixels, 1, 0.0, 10.0);
  return params;
}

spoi::PixelBatch random_batch(spoi::Rng& rng, spoi::Index pixels, spoi::Index wavelengths) {
  spoi::PixelBatch batch;
  batch.pixels = random_matrix(rng, pixels, wavelengths, 0.0, 1.0);
  batch.depths = random_matrix(rng, pixels, 1, 0.0, 10.0);
  return batch;
}

void BM_ForwardPressure(benchmark::State& state) {
  const spoi::Index pixels = state.range(0);
  const spoi::Index wavelengths = 16;
  spoi::Rng rng(42);
  const auto fields = random_fields(rng, pixels, wavelengths);
  const auto params = random_fluence(rng, pixels, wavelengths);
  for (auto _ : state) {
    auto pressure = spoi::forward_pressure(fields, params);
    benchmark::DoNotOptimize(pressure.data());
  }
  state.SetItemsProcessed(state.iterations() * pixels);
}
BENCHMARK(BM_ForwardPressure)->RangeMultiplier(4)->Range(1 << 8, 1 << 14);

void BM_ForwardDecomposed(benchmark::State& state) {
  const spoi::Index pixels = state.range(0);
  const spoi::Index wavelengths = 16;
  spoi::Rng rng(42);
  const auto fields = random_fields(rng, pixels, wavelengths);
  const auto params = random_fluence(rng, pixels, wavelengths);
  for (auto _ : state) {
    auto dec = spoi::forward_decomposed(fields, params);
    benchmark::DoNotOptimize(dec.pressure.data());
  }
  state.SetItemsProcessed(state.iterations() * pixels);
}
BENCHMARK(BM_ForwardDecomposed)->RangeMultiplier(4)->Range(1 << 8, 1 << 14);

void BM_NlsUnmix(benchmark::State& state) {
  const spoi::Index pixels = state.range(0);
  const auto grid = bench_grid();
  const auto spectra = spoi::literature_spectra(grid, {"HbO2", "HHb"});
  spoi::Rng rng(7);
  const auto batch = random_batch(rng, pixels, grid.size());
  for (auto _ : state) {
    auto conc = spoi::nls_unmix(spectra, batch);
    benchmark::DoNotOptimize(conc.data());
  }
  state.SetItemsProcessed(state.iterations() * pixels);
}
BENCHMARK(BM_NlsUnmix)->RangeMultiplier(4)->Range(1 << 8, 1 << 14);

void BM_NmfSweeps(benchmark::State& state) {
  const spoi::Index pixels = 2048;
  const int sweeps = static_cast<int>(state.range(0));
  const auto grid = bench_grid();
  const auto spectra = spoi::literature_spectra(grid, {"HbO2", "HHb"});
  spoi::Rng rng(7);
  const auto batch = random_batch(rng, pixels, grid.size());
  for (auto _ : state) {
    auto result = spoi::nmf_unmix(spectra, batch, sweeps);
    benchmark::DoNotOptimize(result.conc.data());
  }
  state.SetItemsProcessed(state.iterations() * sweeps);
}
BENCHMARK(BM_NmfSweeps)->Arg(1)->Arg(10)->Arg(50);

void BM_TrainStep(benchmark::State& state) {
  const spoi::Index batch_rows = state.range(0);
  const auto grid = bench_grid();
  const auto spectra = spoi::literature_spectra(grid, {"HbO2", "HHb"});
  auto model = spoi::init_model<float>(spectra, spoi::ModelConfig{}, true, 3);
  spoi::Optimizer<float> opt(1e-3);
  spoi::Rng rng(9);
  const auto batch = random_batch(rng, batch_rows, grid.size());
  const spoi::Matf pixels = batch.pixels.cast<float>();
  const spoi::Vecf depths = batch.depths.cast<float>();
  spoi::ForwardCache<float> cache;
  for (auto _ : state) {
    spoi::forward_pass(model, pixels, depths, spoi::nn::Mode::kTrain, cache);
    spoi::Matf grad_pressure;
    spoi::composite_loss<float>(pixels, cache.dec.pressure_hat, 100.0, 5.0, &grad_pressure);
    auto grads = spoi::backward_pass(model, depths, cache, grad_pressure);
    opt.step(model, grads);
    benchmark::DoNotOptimize(model.gamma_phi0.data());
  }
  state.SetItemsProcessed(state.iterations() * batch_rows);
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(256)->Arg(1024);

void BM_Infer(benchmark::State& state) {
  const spoi::Index pixels = state.range(0);
  const auto grid = bench_grid();
  const auto spectra = spoi::literature_spectra(grid, {"HbO2", "HHb"});
  const auto model = spoi::init_model<float>(spectra, spoi::ModelConfig{}, false, 3);
  spoi::Rng rng(9);
  const auto batch = random_batch(rng, pixels, grid.size());
  for (auto _ : state) {
    auto result = spoi::infer(model, batch);
    benchmark::DoNotOptimize(result.so2.values.data());
  }
  state.SetItemsProcessed(state.iterations() * pixels);
}
BENCHMARK(BM_Infer)->RangeMultiplier(4)->Range(1 << 8, 1 << 12);

}  // namespace

BENCHMARK_MAIN();
