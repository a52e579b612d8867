#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "commands.hpp"
#include "spoi/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"spoi: physics-informed optical inversion and spectral unmixing"};
  app.require_subcommand(1);

  spoi::cli::PhantomOptions phantom_opt;
  CLI::App* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom dataset");
  phantom->add_option("--spec", phantom_opt.spec_path,
                      "Phantom spec JSON; omit for the built-in phantom");
  phantom->add_option("--out", phantom_opt.out_path, "Output dataset path")->required();

  spoi::cli::TrainOptions train_opt;
  CLI::App* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("--config", train_opt.config_path, "Run config JSON")->required();

  spoi::cli::UnmixOptions unmix_opt;
  CLI::App* unmix = app.add_subcommand("unmix", "Unmix a dataset");
  unmix->add_option("--method", unmix_opt.method, "nls, nmf, or spoi")
      ->required()
      ->check(CLI::IsMember({"nls", "nmf", "spoi"}));
  unmix->add_option("--dataset", unmix_opt.dataset, "Dataset path")->required();
  unmix->add_option("--checkpoint", unmix_opt.checkpoint, "Model checkpoint (spoi method)");
  unmix->add_option("--out", unmix_opt.out_dir, "Output directory")->required();
  unmix->add_option("--sweeps", unmix_opt.sweeps, "NMF sweep cap");

  spoi::cli::EvalOptions eval_opt;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate an unmixing result");
  eval->add_option("--dataset", eval_opt.dataset, "Dataset path")->required();
  eval->add_option("--result", eval_opt.result_dir, "Unmix output directory")->required();
  eval->add_option("--truth", eval_opt.truth, "Truth companion file for SO2 error");
  eval->add_option("--mask", eval_opt.mask, "ROI mask overriding the truth vessel mask");

  spoi::cli::ImportOptions import_opt;
  CLI::App* import_csv = app.add_subcommand("import-csv", "Convert a CSV export to a dataset");
  import_csv->add_option("--in", import_opt.in_path, "CSV input path")->required();
  import_csv->add_option("--out", import_opt.out_path, "Output dataset path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*phantom) return spoi::cli::run_phantom(phantom_opt);
    if (*train) return spoi::cli::run_train(train_opt);
    if (*unmix) return spoi::cli::run_unmix(unmix_opt);
    if (*eval) return spoi::cli::run_eval(eval_opt);
    if (*import_csv) return spoi::cli::run_import(import_opt);
  } catch (const spoi::NonFiniteLoss& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const spoi::NonFiniteGradient& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const spoi::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
