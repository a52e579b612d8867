#pragma once

#include <filesystem>
#include <string>

namespace spoi::cli {

struct PhantomOptions {
  std::filesystem::path spec_path;  // empty selects the built-in phantom
  std::filesystem::path out_path;
};

struct TrainOptions {
  std::filesystem::path config_path;
};

struct UnmixOptions {
  std::string method;  // nls, nmf, or spoi
  std::filesystem::path dataset;
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir;
  int sweeps = -1;  // nmf only; negative selects the library default
};

struct EvalOptions {
  std::filesystem::path dataset;
  std::filesystem::path result_dir;
  std::filesystem::path truth;
  std::filesystem::path mask;
};

struct ImportOptions {
  std::filesystem::path in_path;
  std::filesystem::path out_path;
};

int run_phantom(const PhantomOptions& opt);
int run_train(const TrainOptions& opt);
int run_unmix(const UnmixOptions& opt);
int run_eval(const EvalOptions& opt);
int run_import(const ImportOptions& opt);

}  // namespace spoi::cli
