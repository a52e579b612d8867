#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "spoi/io/atomic_file.hpp"
#include "spoi/io/dataset.hpp"
#include "spoi/io/tensor_file.hpp"
#include "spoi/phantom.hpp"
#include "spoi/rng.hpp"

using namespace spoi;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() /
          ("spoi_cli_test_" + std::to_string(Rng(::getpid()).next_u64() % 1000000));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  CliResult run(const std::string& args) const {
    const char* bin = std::getenv("SPOI_CLI");
    REQUIRE_MESSAGE(bin != nullptr, "SPOI_CLI must point at the CLI binary");
    const auto out_path = dir / ".stdout";
    const auto err_path = dir / ".stderr";
    const std::string cmd = std::string(bin) + " " + args + " > " + out_path.string() +
                            " 2> " + err_path.string();
    const int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = read_file(out_path);
    result.err = read_file(err_path);
    return result;
  }
};

std::string small_phantom_json() {
  PhantomSpec spec;
  spec.rows = 12;
  spec.cols = 16;
  spec.pixel_pitch_mm = 0.5;
  spec.background_total_hemoglobin = 0.01;
  spec.background_so2_percent = 75.0;
  spec.inclusions = {{3.0, 3.0, 1.0, 90.0, 0.05}};
  spec.depth_offset_mm = 1.0;
  spec.noise_std = 0.01;
  return phantom_spec_to_json(spec);
}

fs::path make_small_dataset(const Workspace& ws, const std::string& name = "data.spad") {
  const auto spec_path = ws.dir / "spec.json";
  atomic_write_file(spec_path, small_phantom_json());
  const auto data_path = ws.dir / name;
  const CliResult r =
      ws.run("phantom --spec " + spec_path.string() + " --out " + data_path.string());
  REQUIRE(r.exit_code == 0);
  return data_path;
}

std::string train_config_json(const fs::path& dataset, const fs::path& out_dir, int epochs,
                              std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["dataset"] = dataset.string();
  j["variant"] = {{"adjust_E", false}, {"beta", 0.0}};
  j["train"] = {{"alpha", 100.0}, {"learning_rate", 1e-3}, {"batch_size", 32},
                {"epochs", epochs}, {"seed", seed}};
  j["model"] = {{"hidden_widths", 8}};
  j["output_dir"] = out_dir.string();
  return j.dump(2) + "\n";
}

int count_lines(const std::string& text) {
  int n = 0;
  for (const char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("bare invocation and bad flags exit with the input-error code") {
  Workspace ws;
  CHECK(ws.run("").exit_code == 2);
  CHECK(ws.run("--help").exit_code == 0);
  CHECK(ws.run("unmix --method bogus --dataset x --out y").exit_code == 2);
  CHECK(ws.run("frobnicate").exit_code == 2);
}

TEST_CASE("phantom generates a loadable dataset with truth sidecar") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);

  CHECK(fs::exists(data_path));
  CHECK(fs::exists(data_path.string() + ".truth"));

  const LoadedDataset data = load_dataset(data_path);
  CHECK(data.batch.pixel_count() == 12 * 16);
  CHECK(data.grid.size() == 146);
  CHECK(data.batch.pixels.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));

  const TruthContent truth = read_truth(data_path.string() + ".truth");
  CHECK(truth.rows == 12);
  CHECK(truth.cols == 16);
  CHECK(truth.conc.rows() == data.batch.pixel_count());
}

TEST_CASE("phantom rejects an out-of-bounds inclusion naming its index") {
  Workspace ws;
  PhantomSpec spec;
  spec.rows = 10;
  spec.cols = 10;
  spec.pixel_pitch_mm = 0.1;
  spec.background_total_hemoglobin = 0.01;
  spec.background_so2_percent = 70.0;
  spec.inclusions = {{0.1, 0.1, 5.0, 80.0, 0.05}};
  const auto spec_path = ws.dir / "bad_spec.json";
  atomic_write_file(spec_path, phantom_spec_to_json(spec));

  const CliResult r =
      ws.run("phantom --spec " + spec_path.string() + " --out " + (ws.dir / "x.spad").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("inclusion 0") != std::string::npos);
}

TEST_CASE("train writes config echo, metrics log, and checkpoint") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);
  const fs::path out_dir = ws.dir / "run";
  const auto config_path = ws.dir / "config.json";
  atomic_write_file(config_path, train_config_json(data_path, out_dir, 1, 1));

  const CliResult r = ws.run("train --config " + config_path.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out_dir / "run_config.json"));
  CHECK(fs::exists(out_dir / "metrics.jsonl"));
  CHECK(fs::exists(out_dir / "model.spoi"));

  const std::string log = read_file(out_dir / "metrics.jsonl");
  CHECK(count_lines(log) == 1);
  const auto line = nlohmann::json::parse(log);
  CHECK(line.at("epoch").get<int>() == 1);
  CHECK(line.at("train_mse").get<double>() > 0.0);
  CHECK(line.contains("wall_ms"));

  const auto echo = nlohmann::json::parse(read_file(out_dir / "run_config.json"));
  CHECK(echo.at("train").at("epochs").get<int>() == 1);
  CHECK(echo.at("variant").at("beta").get<double>() == 0.0);
}

TEST_CASE("same-seed training runs produce byte-identical checkpoints") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);

  for (const char* run : {"run_a", "run_b"}) {
    const auto config_path = ws.dir / (std::string(run) + ".json");
    atomic_write_file(config_path, train_config_json(data_path, ws.dir / run, 2, 7));
    const CliResult r = ws.run("train --config " + config_path.string());
    REQUIRE(r.exit_code == 0);
  }
  CHECK(read_file(ws.dir / "run_a" / "model.spoi") ==
        read_file(ws.dir / "run_b" / "model.spoi"));
}

TEST_CASE("unmix nls writes result tensors and a summary") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);
  const fs::path out_dir = ws.dir / "nls";

  const CliResult r = ws.run("unmix --method nls --dataset " + data_path.string() + " --out " +
                             out_dir.string());
  CHECK(r.exit_code == 0);

  const TensorFile result = read_tensor_file(out_dir / "result.spoi");
  const LoadedDataset data = load_dataset(data_path);
  CHECK(result.matrix("conc").rows() == data.batch.pixel_count());
  CHECK(result.matrix("conc").cols() == 2);
  CHECK(result.vector("so2").size() == data.batch.pixel_count());
  CHECK(result.matrix("recon").cols() == data.grid.size());

  const auto summary = nlohmann::json::parse(read_file(out_dir / "summary.json"));
  CHECK(summary.at("method").get<std::string>() == "nls");
  CHECK(summary.at("pixels").get<Index>() == data.batch.pixel_count());
  CHECK(summary.at("mse").get<double>() >= 0.0);
}

TEST_CASE("unmix nmf with zero sweeps reproduces the nls concentrations") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);

  const CliResult nls = ws.run("unmix --method nls --dataset " + data_path.string() +
                               " --out " + (ws.dir / "nls").string());
  REQUIRE(nls.exit_code == 0);
  const CliResult nmf = ws.run("unmix --method nmf --sweeps 0 --dataset " + data_path.string() +
                               " --out " + (ws.dir / "nmf0").string());
  REQUIRE(nmf.exit_code == 0);

  const Matd conc_nls = read_tensor_file(ws.dir / "nls" / "result.spoi").matrix("conc");
  const TensorFile nmf_result = read_tensor_file(ws.dir / "nmf0" / "result.spoi");
  CHECK((nmf_result.matrix("conc") - conc_nls).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(nmf_result.vector("objective_trace").size() == 1);
  CHECK(fs::exists(ws.dir / "nmf0" / "spectra_learned.csv"));

  const auto summary = nlohmann::json::parse(read_file(ws.dir / "nmf0" / "summary.json"));
  CHECK(summary.at("sweeps_run").get<int>() == 0);
}

TEST_CASE("unmix nmf objective trace is non-increasing") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);
  const CliResult r = ws.run("unmix --method nmf --sweeps 40 --dataset " + data_path.string() +
                             " --out " + (ws.dir / "nmf").string());
  REQUIRE(r.exit_code == 0);
  const Vecd trace =
      read_tensor_file(ws.dir / "nmf" / "result.spoi").vector("objective_trace");
  // the trace is stored in float32, so allow its quantization when comparing
  for (Index k = 1; k < trace.size(); ++k) {
    CHECK(trace[k] <= trace[k - 1] + 1e-5 * std::max(1.0, trace[k - 1]));
  }
}

TEST_CASE("unmix spoi requires a checkpoint and then consumes one") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);

  const CliResult missing = ws.run("unmix --method spoi --dataset " + data_path.string() +
                                   " --out " + (ws.dir / "spoi").string());
  CHECK(missing.exit_code == 2);

  const fs::path out_dir = ws.dir / "run";
  const auto config_path = ws.dir / "config.json";
  atomic_write_file(config_path, train_config_json(data_path, out_dir, 1, 1));
  REQUIRE(ws.run("train --config " + config_path.string()).exit_code == 0);

  const CliResult r = ws.run("unmix --method spoi --dataset " + data_path.string() +
                             " --checkpoint " + (out_dir / "model.spoi").string() + " --out " +
                             (ws.dir / "spoi").string());
  CHECK(r.exit_code == 0);
  const TensorFile result = read_tensor_file(ws.dir / "spoi" / "result.spoi");
  CHECK(result.find("mu_a") != nullptr);
  CHECK(result.find("mu_s_prime") != nullptr);
  CHECK(result.find("mu_a_hat") != nullptr);
  CHECK(result.find("pressure_hat") != nullptr);
  CHECK(result.matrix("mu_a").rows() == 12 * 16);
}

TEST_CASE("eval scores a result directory against the dataset and truth") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);
  const LoadedDataset data = load_dataset(data_path);

  // a synthetic result that reconstructs the input exactly
  const fs::path out_dir = ws.dir / "perfect";
  fs::create_directories(out_dir);
  TensorFile result;
  ConcentrationMatrix conc = Matd::Ones(data.batch.pixel_count(), 2);
  result.add_matrix("conc", conc);
  result.add_vector("so2", Vecd::Constant(data.batch.pixel_count(), 50.0));
  result.add_matrix("recon", data.batch.pixels);
  write_tensor_file(out_dir / "result.spoi", result);

  const CliResult r = ws.run("eval --dataset " + data_path.string() + " --result " +
                             out_dir.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out_dir / "report.json"));
  CHECK(fs::exists(out_dir / "report.csv"));

  const auto report = nlohmann::json::parse(read_file(out_dir / "report.json"));
  CHECK(report.at("mse").get<double>() == 0.0);
  CHECK(report.at("r2_mean").get<double>() == doctest::Approx(1.0).epsilon(1e-12));

  // with truth: constant 50% estimate vs mostly-75% truth gives a known error
  const CliResult with_truth =
      ws.run("eval --dataset " + data_path.string() + " --result " + out_dir.string() +
             " --truth " + data_path.string() + ".truth");
  CHECK(with_truth.exit_code == 0);
  const auto scored = nlohmann::json::parse(with_truth.out);
  CHECK(scored.at("so2_mae_pp").get<double>() == doctest::Approx(40.0).epsilon(1e-6));
}

TEST_CASE("eval rejects empty masks and mismatched shapes") {
  Workspace ws;
  const fs::path data_path = make_small_dataset(ws);
  const LoadedDataset data = load_dataset(data_path);

  const fs::path out_dir = ws.dir / "res";
  fs::create_directories(out_dir);
  TensorFile result;
  result.add_matrix("conc", Matd::Ones(data.batch.pixel_count(), 2));
  result.add_vector("so2", Vecd::Constant(data.batch.pixel_count(), 50.0));
  result.add_matrix("recon", data.batch.pixels);
  write_tensor_file(out_dir / "result.spoi", result);

  std::string zeros;
  for (Index i = 0; i < data.batch.pixel_count(); ++i) zeros += "0\n";
  const auto mask_path = ws.dir / "empty_mask.txt";
  atomic_write_file(mask_path, zeros);

  const CliResult empty = ws.run("eval --dataset " + data_path.string() + " --result " +
                                 out_dir.string() + " --truth " + data_path.string() +
                                 ".truth --mask " + mask_path.string());
  CHECK(empty.exit_code == 2);

  const fs::path other = make_small_dataset(ws, "other.spad");
  TensorFile short_result;
  short_result.add_matrix("conc", Matd::Ones(4, 2));
  short_result.add_vector("so2", Vecd::Constant(4, 50.0));
  short_result.add_matrix("recon", Matd::Ones(4, data.grid.size()));
  const fs::path short_dir = ws.dir / "short";
  fs::create_directories(short_dir);
  write_tensor_file(short_dir / "result.spoi", short_result);
  const CliResult mismatched =
      ws.run("eval --dataset " + other.string() + " --result " + short_dir.string());
  CHECK(mismatched.exit_code == 2);
}

TEST_CASE("import-csv round-trips through the dataset format") {
  Workspace ws;
  const auto csv_path = ws.dir / "pixels.csv";
  atomic_write_file(csv_path,
                    "depth_mm,700,750,800\n"
                    "0.0,0.2,0.4,0.8\n"
                    "1.0,0.1,0.2,0.4\n");
  const auto out_path = ws.dir / "imported.spad";

  const CliResult r =
      ws.run("import-csv --in " + csv_path.string() + " --out " + out_path.string());
  CHECK(r.exit_code == 0);

  const LoadedDataset data = load_dataset(out_path);
  CHECK(data.grid.size() == 3);
  CHECK(data.batch.pixel_count() == 2);
  CHECK(data.batch.pixels(0, 2) == doctest::Approx(1.0).epsilon(1e-12));  // normalized max
  CHECK(data.batch.depths[1] == doctest::Approx(1.0).epsilon(1e-7));

  const CliResult bad = ws.run("import-csv --in " + (ws.dir / "nope.csv").string() + " --out " +
                               out_path.string());
  CHECK(bad.exit_code == 2);
}

TEST_CASE("train surfaces dataset problems through exit code 2") {
  Workspace ws;
  const auto config_path = ws.dir / "config.json";
  atomic_write_file(config_path,
                    train_config_json(ws.dir / "missing.spad", ws.dir / "out", 1, 1));
  CHECK(ws.run("train --config " + config_path.string()).exit_code == 2);

  atomic_write_file(config_path, "{\"output_dir\": \"x\"}");
  CHECK(ws.run("train --config " + config_path.string()).exit_code == 2);

  atomic_write_file(config_path, "{nope");
  CHECK(ws.run("train --config " + config_path.string()).exit_code == 2);
}

}
