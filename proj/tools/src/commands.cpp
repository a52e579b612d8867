#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "spoi/errors.hpp"
#include "spoi/io/atomic_file.hpp"
#include "spoi/io/checkpoint.hpp"
#include "spoi/io/dataset.hpp"
#include "spoi/io/tensor_file.hpp"
#include "spoi/metrics.hpp"
#include "spoi/model/spoi_ae.hpp"
#include "spoi/nmf.hpp"
#include "spoi/nnls.hpp"
#include "spoi/phantom.hpp"
#include "spoi/spectra.hpp"

namespace spoi::cli {

namespace {

const std::vector<std::string> kChromophores = {"HbO2", "HHb"};

nlohmann::json parse_json_file(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path.string()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

template <typename T>
T field_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  }
}

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path mask;
  bool adjust_spectra = false;
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path output_dir;
};

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  if (!j.contains("dataset")) throw ConfigError("run config: 'dataset' is required");
  if (!j.contains("output_dir")) throw ConfigError("run config: 'output_dir' is required");
  cfg.dataset = field_or<std::string>(j, "dataset", "");
  cfg.mask = field_or<std::string>(j, "mask", "");
  cfg.output_dir = field_or<std::string>(j, "output_dir", "");

  if (j.contains("variant")) {
    const auto& v = j.at("variant");
    cfg.adjust_spectra = field_or(v, "adjust_E", false);
    cfg.train.beta = field_or(v, "beta", cfg.train.beta);
    if (cfg.train.beta < 0.0) throw ConfigError("run config: variant.beta must be nonnegative");
  }
  cfg.train.adjust_spectra = cfg.adjust_spectra;

  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.alpha = field_or(t, "alpha", cfg.train.alpha);
    cfg.train.learning_rate = field_or(t, "learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = field_or<Index>(t, "batch_size", cfg.train.batch_size);
    cfg.train.epochs = field_or(t, "epochs", cfg.train.epochs);
    cfg.train.seed = field_or<std::uint64_t>(t, "seed", cfg.train.seed);
    cfg.train.eval_fraction = field_or(t, "eval_fraction", cfg.train.eval_fraction);
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    if (m.contains("hidden_widths")) {
      const auto& w = m.at("hidden_widths");
      // A single integer widens every hidden layer uniformly; an object sets
      // the two nets separately. Layer counts stay architectural (2 and 3).
      if (w.is_number_integer()) {
        const Index width = w.get<Index>();
        if (width < 1) throw ConfigError("run config: hidden_widths must be positive");
        cfg.model.mua_hidden = {width, width};
        cfg.model.mus_hidden = {width, width, width};
      } else if (w.is_object()) {
        cfg.model.mua_hidden = field_or(w, "mua", cfg.model.mua_hidden);
        cfg.model.mus_hidden = field_or(w, "mus", cfg.model.mus_hidden);
      } else {
        throw ConfigError("run config: hidden_widths must be an integer or an object");
      }
    }
  }
  return cfg;
}

nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["dataset"] = cfg.dataset.string();
  if (!cfg.mask.empty()) j["mask"] = cfg.mask.string();
  j["variant"] = {{"adjust_E", cfg.adjust_spectra}, {"beta", cfg.train.beta}};
  j["train"] = {{"alpha", cfg.train.alpha},
                {"learning_rate", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"seed", cfg.train.seed},
                {"eval_fraction", cfg.train.eval_fraction}};
  j["model"] = {{"hidden_widths",
                 {{"mua", cfg.model.mua_hidden}, {"mus", cfg.model.mus_hidden}}}};
  j["output_dir"] = cfg.output_dir.string();
  return j;
}

std::vector<std::size_t> masked_rows(const std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) rows.push_back(i);
  }
  return rows;
}

}  // namespace

int run_phantom(const PhantomOptions& opt) {
  PhantomSpec spec = opt.spec_path.empty()
                         ? default_paper_phantom()
                         : phantom_spec_from_json(read_file(opt.spec_path.string()));
  spec.validate();

  const WavelengthGrid grid = WavelengthGrid::default_grid();
  const SpectraMatrix spectra = literature_spectra(grid, kChromophores);
  const LabeledDataset data = generate(spec, grid, spectra);

  write_dataset(opt.out_path, grid, data.batch);
  const std::filesystem::path truth_path = opt.out_path.string() + ".truth";
  write_truth(truth_path, spec, data);

  std::printf("wrote %s: %lld pixels x %lld wavelengths (%lld x %lld grid)\n",
              opt.out_path.string().c_str(), static_cast<long long>(data.batch.pixel_count()),
              static_cast<long long>(grid.size()), static_cast<long long>(data.rows),
              static_cast<long long>(data.cols));
  std::printf("wrote %s\n", truth_path.string().c_str());
  std::printf("%-9s %-16s %-9s %-7s %s\n", "inclusion", "center_mm", "radius_mm", "so2_pct",
              "total_hb");
  for (std::size_t k = 0; k < spec.inclusions.size(); ++k) {
    const Inclusion& inc = spec.inclusions[k];
    char center[32];
    std::snprintf(center, sizeof center, "(%.2f, %.2f)", inc.center_x_mm, inc.center_y_mm);
    std::printf("%-9zu %-16s %-9.2f %-7.1f %.4f\n", k, center, inc.radius_mm, inc.so2_percent,
                inc.total_hemoglobin);
  }
  return 0;
}

int run_train(const TrainOptions& opt) {
  const RunConfig cfg = parse_run_config(parse_json_file(opt.config_path));
  if (cfg.train.beta != 0.0 && cfg.train.beta != 5.0) {
    std::fprintf(stderr, "warning: beta=%g is outside the standard variants {0, 5}\n",
                 cfg.train.beta);
  }

  LoadedDataset data = load_dataset(cfg.dataset);
  if (!cfg.mask.empty()) {
    const auto mask = load_mask(cfg.mask, data.batch.pixel_count());
    data.batch = data.batch.select(masked_rows(mask));
  }

  const SpectraMatrix spectra = literature_spectra(data.grid, kChromophores);
  ModelParams<float> model =
      init_model<float>(spectra, cfg.model, cfg.adjust_spectra, cfg.train.seed);
  const TrainResult result = train(model, data.batch, cfg.train);

  std::filesystem::create_directories(cfg.output_dir);
  atomic_write_file((cfg.output_dir / "run_config.json").string(),
                    run_config_to_json(cfg).dump(2) + "\n");

  std::string log;
  double wall_ms = 0.0;
  for (const EpochStats& e : result.history) {
    nlohmann::ordered_json line = {{"epoch", e.epoch},
                                   {"train_mse", e.train_mse},
                                   {"train_msad", e.train_msad},
                                   {"loss", e.loss},
                                   {"wall_ms", e.wall_ms}};
    log += line.dump() + "\n";
    wall_ms += e.wall_ms;
  }
  atomic_write_file((cfg.output_dir / "metrics.jsonl").string(), log);

  const std::filesystem::path checkpoint_path = cfg.output_dir / "model.spoi";
  save_checkpoint(checkpoint_path, model, data.grid);

  std::printf("trained %d epochs on %zu pixels (%zu held out)\n", cfg.train.epochs,
              result.train_rows.size(), result.eval_rows.size());
  if (!result.history.empty()) {
    const EpochStats& last = result.history.back();
    std::printf("final: mse=%.6g msad=%.6g loss=%.6g\n", last.train_mse, last.train_msad,
                last.loss);
  }
  std::printf("wrote %s\n", checkpoint_path.string().c_str());
  std::fprintf(stderr, "wall time: %.1f s\n", wall_ms / 1000.0);
  return 0;
}

int run_unmix(const UnmixOptions& opt) {
  const LoadedDataset data = load_dataset(opt.dataset);
  std::filesystem::create_directories(opt.out_dir);

  nlohmann::ordered_json summary;
  summary["method"] = opt.method;
  summary["dataset"] = opt.dataset.string();
  summary["pixels"] = data.batch.pixel_count();
  summary["wavelengths"] = data.batch.wavelength_count();

  TensorFile result;
  ConcentrationMatrix conc;
  Matd recon;
  auto add_common = [&](const ConcentrationMatrix& c, const Matd& r) {
    result.add_matrix("conc", c);
    result.add_vector("so2", so2(c).values);
    result.add_matrix("recon", r);
  };

  if (opt.method == "nls") {
    const SpectraMatrix spectra = literature_spectra(data.grid, kChromophores);
    conc = nls_unmix(spectra, data.batch);
    recon = conc * spectra.values.transpose();
    add_common(conc, recon);
  } else if (opt.method == "nmf") {
    const SpectraMatrix init = literature_spectra(data.grid, kChromophores);
    const int sweeps = opt.sweeps < 0 ? kNmfDefaultSweeps : opt.sweeps;
    const NmfResult nmf = nmf_unmix(init, data.batch, sweeps);
    conc = nmf.conc;
    recon = conc * nmf.spectra.transpose();
    add_common(conc, recon);
    result.add_matrix("spectra_learned", nmf.spectra);
    result.add_vector("objective_trace",
                      Eigen::Map<const Vecd>(nmf.objective_trace.data(),
                                             static_cast<Index>(nmf.objective_trace.size())));
    save_spectra_csv((opt.out_dir / "spectra_learned.csv").string(), data.grid,
                     init.with_values(nmf.spectra));
    summary["sweeps_run"] = nmf.objective_trace.size() - 1;
    summary["objective_initial"] = nmf.objective_trace.front();
    summary["objective_final"] = nmf.objective_trace.back();
  } else if (opt.method == "spoi") {
    if (opt.checkpoint.empty()) {
      throw ConfigError("unmix: --method spoi requires --checkpoint");
    }
    const LoadedModel<float> loaded = load_checkpoint<float>(opt.checkpoint);
    if (!(loaded.grid == data.grid)) {
      throw DimensionMismatch("unmix: checkpoint grid differs from dataset grid");
    }
    const UnmixResult res = infer(loaded.model, data.batch);
    conc = res.conc;
    recon = res.pressure_hat;
    add_common(conc, recon);
    result.add_matrix("mu_a", res.mu_a);
    result.add_matrix("mu_a_hat", res.mu_a_hat);
    result.add_matrix("mu_s_prime", res.mu_s_prime);
    result.add_matrix("pressure_hat", res.pressure_hat);
    if (loaded.model.adjust_spectra) {
      save_spectra_csv((opt.out_dir / "spectra_learned.csv").string(), data.grid,
                       loaded.model.spectra);
    }
  } else {
    throw ConfigError("unmix: unknown method '" + opt.method + "'");
  }

  write_tensor_file(opt.out_dir / "result.spoi", result);

  const EvalReport report = evaluate(data.batch, recon);
  summary["mse"] = report.mse;
  summary["msad"] = report.msad;
  summary["r2_mean"] = report.r2_mean;
  summary["r2_std"] = report.r2_std;
  const std::string text = summary.dump(2) + "\n";
  atomic_write_file((opt.out_dir / "summary.json").string(), text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int run_eval(const EvalOptions& opt) {
  const LoadedDataset data = load_dataset(opt.dataset);
  const TensorFile result = read_tensor_file(opt.result_dir / "result.spoi");
  const Matd recon = result.matrix("recon");
  if (recon.rows() != data.batch.pixel_count() || recon.cols() != data.batch.wavelength_count()) {
    throw DimensionMismatch("eval: result tensors do not match the dataset dimensions");
  }

  const EvalReport report = evaluate(data.batch, recon);
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(report_to_json(report));
  if (!opt.truth.empty()) {
    const TruthContent truth = read_truth(opt.truth);
    if (truth.so2.pixel_count() != data.batch.pixel_count()) {
      throw DimensionMismatch("eval: truth file does not match the dataset dimensions");
    }
    const So2Map estimate{result.vector("so2")};
    const std::vector<std::uint8_t> mask =
        opt.mask.empty() ? truth.vessel_mask : load_mask(opt.mask, data.batch.pixel_count());
    j["so2_mae_pp"] = so2_mae(estimate, truth.so2, mask);
  }

  const std::string text = j.dump(2) + "\n";
  atomic_write_file((opt.result_dir / "report.json").string(), text);
  write_report_csv(opt.result_dir / "report.csv", data.grid, report);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int run_import(const ImportOptions& opt) {
  const LoadedDataset data = import_csv(opt.in_path);
  write_dataset(opt.out_path, data.grid, data.batch);
  std::printf("wrote %s: %lld pixels x %lld wavelengths\n", opt.out_path.string().c_str(),
              static_cast<long long>(data.batch.pixel_count()),
              static_cast<long long>(data.batch.wavelength_count()));
  return 0;
}

}  // namespace spoi::cli
