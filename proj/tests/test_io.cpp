#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "spoi/errors.hpp"
#include "spoi/io/atomic_file.hpp"
#include "spoi/io/checkpoint.hpp"
#include "spoi/io/dataset.hpp"
#include "spoi/io/tensor_file.hpp"
#include "spoi/model/spoi_ae.hpp"
#include "spoi/phantom.hpp"
#include "spoi/rng.hpp"
#include "spoi/spectra.hpp"

using namespace spoi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("spoi_io_test_" + std::to_string(Rng(::getpid()).next_u64() % 1000000));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Matd random_matrix(Rng& rng, Index rows, Index cols, double lo, double hi) {
  Matd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  }
  return m;
}

WavelengthGrid short_grid() {
  return WavelengthGrid({700.0, 730.0, 760.0, 790.0, 820.0, 850.0});
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("atomic file write and read round-trip") {
  TempDir tmp;
  const auto path = tmp.path / "note.txt";
  const std::string payload("hello\n\0binary\x7f ok", 17);  // embedded NUL
  atomic_write_file(path, payload);
  CHECK(read_file(path) == payload);
  CHECK_THROWS_AS(read_file(tmp.path / "missing.txt"), IoError);
}

TEST_CASE("tensor file round-trips records in order, byte-identically") {
  TempDir tmp;
  Rng rng(80);

  const Matd mat = random_matrix(rng, 3, 4, -1.0, 1.0);

  TensorFile file;
  file.add("raw/rank3", {2, 3, 2}, std::vector<float>(12, 0.5f));
  file.add_matrix("mat", mat);
  file.add_vector("vec", Vecd(Vecd::LinSpaced(5, 0.0, 1.0)));
  file.add_row("rowvec", RowVecd(RowVecd::Constant(3, 2.5)));
  file.add_text("meta/text", "{\"k\": 1}");

  const auto path_a = tmp.path / "a.spoi";
  const auto path_b = tmp.path / "b.spoi";
  write_tensor_file(path_a, file);
  write_tensor_file(path_b, file);
  CHECK(read_file(path_a) == read_file(path_b));

  const TensorFile loaded = read_tensor_file(path_a);
  REQUIRE(loaded.records.size() == 5);
  CHECK(loaded.records[0].name == "raw/rank3");
  CHECK(loaded.records[0].dims == std::vector<std::uint64_t>{2, 3, 2});
  CHECK(loaded.records[1].name == "mat");
  CHECK(loaded.records[4].name == "meta/text");

  const Matd m = loaded.matrix("mat");
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 4);
  // float32 storage: double payloads round to the nearest float
  CHECK((m - mat).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK(loaded.vector("vec").size() == 5);
  CHECK((loaded.row("rowvec") - RowVecd::Constant(3, 2.5)).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(loaded.text("meta/text") == "{\"k\": 1}");

  CHECK(loaded.find("nope") == nullptr);
  CHECK_THROWS_AS(loaded.require("nope"), IoError);
  CHECK_THROWS_AS(loaded.matrix("vec"), IoError);   // rank mismatch
  CHECK_THROWS_AS(loaded.vector("mat"), IoError);
}

TEST_CASE("tensor file rejects mismatched dims and malformed bytes") {
  TempDir tmp;
  TensorFile file;
  CHECK_THROWS_AS(file.add("bad", {2, 2}, std::vector<float>(3, 0.0f)), IoError);

  file.add("ok", {2}, {1.0f, 2.0f});
  const auto path = tmp.path / "t.spoi";
  write_tensor_file(path, file);

  std::string bytes = read_file(path);

  // truncated payload
  atomic_write_file(tmp.path / "trunc.spoi", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_tensor_file(tmp.path / "trunc.spoi"), IoError);

  // wrong magic
  std::string magic = bytes;
  magic[0] = 'X';
  atomic_write_file(tmp.path / "magic.spoi", magic);
  CHECK_THROWS_AS(read_tensor_file(tmp.path / "magic.spoi"), IoError);

  // unsupported version
  std::string version = bytes;
  version[4] = 9;
  atomic_write_file(tmp.path / "version.spoi", version);
  CHECK_THROWS_AS(read_tensor_file(tmp.path / "version.spoi"), IoError);
}

TEST_CASE("dataset write/load round-trips and normalizes") {
  TempDir tmp;
  Rng rng(81);
  const WavelengthGrid grid = short_grid();

  PixelBatch batch;
  batch.pixels = random_matrix(rng, 20, grid.size(), 0.0, 5.0);
  batch.depths = random_matrix(rng, 20, 1, 0.0, 12.0).col(0);

  const auto path = tmp.path / "data.spad";
  write_dataset(path, grid, batch);
  const LoadedDataset loaded = load_dataset(path);

  CHECK(loaded.grid == grid);
  CHECK(loaded.batch.pixel_count() == 20);
  CHECK(loaded.batch.pixels.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));

  // scaling is global: relative pixel structure survives within f32 precision
  const Matd expected = batch.pixels / batch.pixels.maxCoeff();
  CHECK((loaded.batch.pixels - expected).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((loaded.batch.depths - batch.depths).lpNorm<Eigen::Infinity>() < 1e-5);

  // re-saving quantizes the normalized doubles to f32 once; after that the
  // values are exactly representable and the round-trip is a fixed point
  write_dataset(tmp.path / "norm.spad", loaded.grid, loaded.batch);
  const LoadedDataset again = load_dataset(tmp.path / "norm.spad");
  CHECK((again.batch.pixels - loaded.batch.pixels).lpNorm<Eigen::Infinity>() < 1e-7);
  write_dataset(tmp.path / "norm2.spad", again.grid, again.batch);
  const LoadedDataset third = load_dataset(tmp.path / "norm2.spad");
  CHECK((third.batch.pixels - again.batch.pixels).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((third.batch.depths - again.batch.depths).lpNorm<Eigen::Infinity>() == 0.0);

  CHECK_THROWS_AS(write_dataset(tmp.path / "bad.spad", grid,
                                PixelBatch{random_matrix(rng, 4, 3, 0.0, 1.0), Vecd::Zero(4)}),
                  DimensionMismatch);
}

TEST_CASE("dataset loader rejects corrupt input") {
  TempDir tmp;

  atomic_write_file(tmp.path / "junk.spad", "not a dataset at all");
  CHECK_THROWS_AS(load_dataset(tmp.path / "junk.spad"), IoError);

  const WavelengthGrid grid = short_grid();
  PixelBatch zero{Matd::Zero(3, grid.size()), Vecd::Zero(3)};
  write_dataset(tmp.path / "zero.spad", grid, zero);
  CHECK_THROWS_AS(load_dataset(tmp.path / "zero.spad"), ZeroDataMatrix);

  PixelBatch ok{Matd::Ones(3, grid.size()), Vecd::Zero(3)};
  write_dataset(tmp.path / "ok.spad", grid, ok);
  const std::string bytes = read_file(tmp.path / "ok.spad");
  atomic_write_file(tmp.path / "short.spad", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_dataset(tmp.path / "short.spad"), IoError);
}

TEST_CASE("truth companion round-trips labels and spec") {
  TempDir tmp;
  PhantomSpec spec;
  spec.rows = 8;
  spec.cols = 10;
  spec.pixel_pitch_mm = 0.5;
  spec.background_total_hemoglobin = 0.01;
  spec.background_so2_percent = 60.0;
  spec.inclusions = {{2.0, 2.0, 1.0, 95.0, 0.05}};
  spec.depth_offset_mm = 1.0;

  const SpectraMatrix spectra = literature_spectra(short_grid(), {"HbO2", "HHb"});
  const LabeledDataset data = generate(spec, short_grid(), spectra);

  const auto path = tmp.path / "data.spad.truth";
  write_truth(path, spec, data);
  const TruthContent truth = read_truth(path);

  CHECK(truth.rows == 8);
  CHECK(truth.cols == 10);
  CHECK(truth.vessel_mask == data.vessel_mask);
  CHECK((truth.conc - data.truth_conc).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK((truth.fields.mu_a - data.truth_fields.mu_a).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((truth.fields.mu_s_prime - data.truth_fields.mu_s_prime).lpNorm<Eigen::Infinity>() <
        1e-6);
  for (Index i = 0; i < truth.so2.pixel_count(); ++i) {
    if (data.truth_so2.defined(i)) {
      CHECK(truth.so2.values[i] == doctest::Approx(data.truth_so2.values[i]).epsilon(1e-5));
    } else {
      CHECK(!truth.so2.defined(i));
    }
  }

  const PhantomSpec parsed = phantom_spec_from_json(truth.spec_json);
  CHECK(parsed.rows == spec.rows);
  CHECK(parsed.inclusions.size() == 1);
  CHECK(parsed.inclusions[0].so2_percent == 95.0);
}

TEST_CASE("csv import parses valid files and reports bad lines") {
  TempDir tmp;
  const auto path = tmp.path / "pixels.csv";

  atomic_write_file(path,
                    "depth_mm,700,750,800\n"
                    "0.0,0.1,0.2,0.3\n"
                    "\n"
                    "1.5,0.4,0.5,0.6\n");
  const LoadedDataset data = import_csv(path);
  CHECK(data.grid.size() == 3);
  CHECK(data.grid[0] == 700.0);
  CHECK(data.batch.pixel_count() == 2);
  CHECK(data.batch.depths[1] == 1.5);
  CHECK(data.batch.pixels(1, 2) == 0.6);

  atomic_write_file(path, "depth_mm,700,750,800\n0.0,0.1,0.2\n");
  CHECK_THROWS_WITH_AS(import_csv(path), doctest::Contains(":2:"), IoError);

  atomic_write_file(path, "depth_mm,700,750,800\n0.0,0.1,abc,0.3\n");
  CHECK_THROWS_WITH_AS(import_csv(path), doctest::Contains("abc"), IoError);

  atomic_write_file(path, "wrong,700,750\n");
  CHECK_THROWS_AS(import_csv(path), IoError);

  atomic_write_file(path, "depth_mm,700,750,800\n");
  CHECK_THROWS_AS(import_csv(path), IoError);
}

TEST_CASE("mask loader is strict about tokens and length") {
  TempDir tmp;
  const auto path = tmp.path / "mask.txt";

  atomic_write_file(path, "1\n0\n\n1\n");
  const auto mask = load_mask(path, 3);
  CHECK(mask == std::vector<std::uint8_t>({1, 0, 1}));

  CHECK_THROWS_AS(load_mask(path, 4), IoError);

  atomic_write_file(path, "1\n2\n");
  CHECK_THROWS_AS(load_mask(path, 2), IoError);

  atomic_write_file(path, "1\ntrue\n");
  CHECK_THROWS_AS(load_mask(path, 2), IoError);
}

TEST_CASE("checkpoint round-trips a float model exactly") {
  TempDir tmp;
  const WavelengthGrid grid = short_grid();
  const SpectraMatrix spectra = literature_spectra(grid, {"HbO2", "HHb"});
  ModelConfig config;
  config.mua_hidden = {6, 6};
  config.mus_hidden = {6, 6, 6};
  auto model = init_model<float>(spectra, config, true, 42);

  // nudge running stats and weights off their init so the roundtrip is tested
  Rng rng(82);
  PixelBatch data{random_matrix(rng, 32, grid.size(), 0.0, 1.0), Vecd::Zero(32)};
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.adjust_spectra = true;
  train(model, data, tc);

  const auto path = tmp.path / "model.spoi";
  save_checkpoint<float>(path, model, grid);
  const LoadedModel<float> loaded = load_checkpoint<float>(path);

  CHECK(loaded.grid == grid);
  CHECK(loaded.model.adjust_spectra == true);
  CHECK(loaded.model.spectra.names == spectra.names);
  CHECK(!loaded.model.spectra.pinv_stale);
  CHECK(loaded.model.mua_net.hidden.size() == 2);
  CHECK(loaded.model.mus_net.hidden.size() == 3);

  for (std::size_t j = 0; j < 2; ++j) {
    CHECK((loaded.model.mua_net.hidden[j].weights - model.mua_net.hidden[j].weights)
              .lpNorm<Eigen::Infinity>() == 0.0f);
    CHECK((loaded.model.mua_net.norms[j].running_mean - model.mua_net.norms[j].running_mean)
              .lpNorm<Eigen::Infinity>() == 0.0f);
    CHECK((loaded.model.mua_net.norms[j].running_var - model.mua_net.norms[j].running_var)
              .lpNorm<Eigen::Infinity>() == 0.0f);
  }
  CHECK((loaded.model.mus_net.head.weights - model.mus_net.head.weights)
            .lpNorm<Eigen::Infinity>() == 0.0f);
  CHECK((loaded.model.gamma_phi0 - model.gamma_phi0).lpNorm<Eigen::Infinity>() == 0.0f);
  // spectra are stored in float32, which the float model lives in anyway
  CHECK((loaded.model.spectra.values.cast<float>() - model.spectra.values.cast<float>())
            .lpNorm<Eigen::Infinity>() == 0.0f);

  // identical saves are identical bytes
  save_checkpoint<float>(tmp.path / "again.spoi", model, grid);
  CHECK(read_file(path) == read_file(tmp.path / "again.spoi"));

  // inference through the loaded model reproduces the original
  const UnmixResult a = infer(model, data);
  const UnmixResult b = infer(loaded.model, data);
  CHECK((a.pressure_hat - b.pressure_hat).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("checkpoint stores optimizer state on request and loads without it") {
  TempDir tmp;
  const WavelengthGrid grid = short_grid();
  const SpectraMatrix spectra = literature_spectra(grid, {"HbO2", "HHb"});
  ModelConfig config;
  config.mua_hidden = {6, 6};
  config.mus_hidden = {6, 6, 6};
  auto model = init_model<float>(spectra, config, false, 7);

  Rng rng(83);
  const Mat<float> x = random_matrix(rng, 8, grid.size(), 0.0, 1.0).cast<float>();
  const Vec<float> rho = Vec<float>::Zero(8);

  Optimizer<float> optimizer(1e-3);
  ForwardCache<float> cache;
  forward_pass(model, x, rho, nn::Mode::train, cache);
  Mat<float> grad_pressure;
  composite_loss<float>(x, cache.dec.pressure_hat, 100.0, 0.0, &grad_pressure);
  optimizer.step(model, backward_pass(model, rho, cache, grad_pressure));

  const auto path = tmp.path / "with_adam.spoi";
  save_checkpoint<float>(path, model, grid, &optimizer);

  const TensorFile raw = read_tensor_file(path);
  CHECK(raw.find("adam/step") != nullptr);
  CHECK(raw.find("adam/hyper") != nullptr);
  CHECK(raw.find("adam/m/mua_net/0/W") != nullptr);
  CHECK(raw.find("adam/v/gamma_phi0") != nullptr);
  CHECK(raw.require("adam/step").data[0] == 1.0f);

  const LoadedModel<float> loaded = load_checkpoint<float>(path);
  CHECK((loaded.model.gamma_phi0 - model.gamma_phi0).lpNorm<Eigen::Infinity>() == 0.0f);
}

TEST_CASE("checkpoint loader surfaces missing records and bad metadata") {
  TempDir tmp;
  const WavelengthGrid grid = short_grid();
  const SpectraMatrix spectra = literature_spectra(grid, {"HbO2", "HHb"});
  ModelConfig config;
  config.mua_hidden = {4, 4};
  config.mus_hidden = {4, 4, 4};
  const auto model = init_model<float>(spectra, config, false, 3);

  const auto path = tmp.path / "model.spoi";
  save_checkpoint<float>(path, model, grid);

  TensorFile file = read_tensor_file(path);
  TensorFile missing;
  missing.version = file.version;
  for (const auto& r : file.records) {
    if (r.name != "spectra/values") missing.records.push_back(r);
  }
  write_tensor_file(tmp.path / "missing.spoi", missing);
  CHECK_THROWS_AS(load_checkpoint<float>(tmp.path / "missing.spoi"), IoError);

  TensorFile garbled = file;
  for (auto& r : garbled.records) {
    if (r.name == "meta/model_json") {
      r.data.assign(3, static_cast<float>('x'));
      r.dims = {3};
    }
  }
  write_tensor_file(tmp.path / "garbled.spoi", garbled);
  CHECK_THROWS_AS(load_checkpoint<float>(tmp.path / "garbled.spoi"), IoError);
}

}
