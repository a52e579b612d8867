#include "spoi/io/checkpoint.hpp"

#include <string>
#include <vector>

#include "json.hpp"
#include "spoi/errors.hpp"
#include "spoi/io/tensor_file.hpp"

namespace spoi {

namespace {

template <typename S>
const char* scalar_name() {
  return sizeof(S) == 4 ? "float32" : "float64";
}

template <typename Derived>
void add_tensor(TensorFile& file, std::string name, const Eigen::MatrixBase<Derived>& m,
                bool as_row = false) {
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data[k++] = static_cast<float>(m(r, c));
  }
  if (as_row || m.rows() == 1) {
    file.add(std::move(name), {static_cast<std::uint64_t>(m.size())}, std::move(data));
  } else {
    file.add(std::move(name),
             {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
             std::move(data));
  }
}

template <typename S>
Mat<S> read_mat(const TensorFile& file, const std::string& name) {
  return file.matrix(name).cast<S>();
}

template <typename S>
RowVec<S> read_row(const TensorFile& file, const std::string& name) {
  return file.row(name).cast<S>();
}

/// Per-tensor names in the exact order the optimizer steps them.
template <typename S>
std::vector<std::string> learnable_names(const ModelParams<S>& model) {
  std::vector<std::string> names;
  // order within a layer is W, b, gamma, beta; the head has no norm
  auto push_net = [&](const FcnnParams<S>& net, const std::string& prefix) {
    for (std::size_t j = 0; j < net.hidden.size(); ++j) {
      const std::string base = prefix + "/" + std::to_string(j) + "/";
      names.push_back(base + "W");
      names.push_back(base + "b");
      names.push_back(base + "gamma");
      names.push_back(base + "beta");
    }
    const std::string base = prefix + "/" + std::to_string(net.hidden.size()) + "/";
    names.push_back(base + "W");
    names.push_back(base + "b");
  };
  push_net(model.mua_net, "mua_net");
  push_net(model.mus_net, "mus_net");
  names.push_back("gamma_phi0");
  names.push_back("spectra/values");
  return names;
}

}  // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<S>& model,
                     const WavelengthGrid& grid, const Optimizer<S>* optimizer) {
  if (grid.size() != model.wavelength_count()) {
    throw DimensionMismatch("save_checkpoint: grid and model wavelength counts differ");
  }
  TensorFile file;

  nlohmann::ordered_json meta;
  meta["scalar"] = scalar_name<S>();
  meta["adjust_spectra"] = model.adjust_spectra;
  std::vector<Index> mua_hidden, mus_hidden;
  for (const auto& n : model.mua_net.norms) mua_hidden.push_back(n.feature_count());
  for (const auto& n : model.mus_net.norms) mus_hidden.push_back(n.feature_count());
  meta["mua_hidden"] = mua_hidden;
  meta["mus_hidden"] = mus_hidden;
  meta["chromophores"] = model.spectra.names;
  meta["bn_epsilon"] = 1e-5;
  meta["bn_momentum"] = 0.1;
  file.add_text("meta/model_json", meta.dump());

  Vecd wavelengths(grid.size());
  for (Index l = 0; l < grid.size(); ++l) wavelengths[l] = grid[l];
  file.add_vector("grid/wavelengths_nm", wavelengths);
  file.add_matrix("spectra/values", model.spectra.values);
  add_tensor(file, "gamma_phi0", model.gamma_phi0, true);

  auto write_net = [&](const FcnnParams<S>& net, const std::string& prefix) {
    for (std::size_t j = 0; j < net.hidden.size(); ++j) {
      const std::string base = prefix + "/" + std::to_string(j) + "/";
      add_tensor(file, base + "W", net.hidden[j].weights);
      add_tensor(file, base + "b", net.hidden[j].bias, true);
      add_tensor(file, base + "gamma", net.norms[j].gamma, true);
      add_tensor(file, base + "beta", net.norms[j].beta, true);
    }
    const std::string base = prefix + "/" + std::to_string(net.hidden.size()) + "/";
    add_tensor(file, base + "W", net.head.weights);
    add_tensor(file, base + "b", net.head.bias, true);
  };
  write_net(model.mua_net, "mua_net");
  write_net(model.mus_net, "mus_net");

  auto write_running = [&](const FcnnParams<S>& net, const std::string& prefix) {
    for (std::size_t j = 0; j < net.hidden.size(); ++j) {
      const std::string base = "running/" + prefix + "/" + std::to_string(j) + "/";
      add_tensor(file, base + "mean", net.norms[j].running_mean, true);
      add_tensor(file, base + "var", net.norms[j].running_var, true);
    }
  };
  write_running(model.mua_net, "mua_net");
  write_running(model.mus_net, "mus_net");

  if (optimizer != nullptr && !optimizer->states().empty()) {
    const auto names = learnable_names(model);
    const auto& states = optimizer->states();
    if (states.size() != names.size()) {
      throw IoError("save_checkpoint: optimizer state count does not match model layout");
    }
    file.add("adam/step", {1}, {static_cast<float>(optimizer->step_count())});
    file.add("adam/hyper", {4},
             {static_cast<float>(states[0].learning_rate), static_cast<float>(states[0].beta1),
              static_cast<float>(states[0].beta2), static_cast<float>(states[0].eps_opt)});
    for (std::size_t k = 0; k < names.size(); ++k) {
      // Moments of a never-stepped tensor stay empty; record them as such.
      add_tensor(file, "adam/m/" + names[k], states[k].first_moment);
      add_tensor(file, "adam/v/" + names[k], states[k].second_moment);
    }
  }

  write_tensor_file(path, file);
}

template <typename S>
LoadedModel<S> load_checkpoint(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(file.text("meta/model_json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": bad model metadata: " + e.what());
  }

  const Vecd wavelengths = file.vector("grid/wavelengths_nm");
  LoadedModel<S> out{
      {}, WavelengthGrid(std::vector<double>(wavelengths.data(),
                                             wavelengths.data() + wavelengths.size()))};
  ModelParams<S>& model = out.model;

  model.spectra.values = file.matrix("spectra/values");
  model.spectra.names = meta.value("chromophores", std::vector<std::string>{});
  model.spectra = compute_pinv(std::move(model.spectra));
  model.adjust_spectra = meta.value("adjust_spectra", false);
  model.gamma_phi0 = read_row<S>(file, "gamma_phi0");

  const auto bn_epsilon = meta.value("bn_epsilon", 1e-5);
  const auto bn_momentum = meta.value("bn_momentum", 0.1);
  auto read_net = [&](FcnnParams<S>& net, const std::string& prefix,
                      const std::vector<Index>& hidden) {
    for (std::size_t j = 0; j < hidden.size(); ++j) {
      const std::string base = prefix + "/" + std::to_string(j) + "/";
      nn::DenseLayerParams<S> layer;
      layer.weights = read_mat<S>(file, base + "W");
      layer.bias = read_row<S>(file, base + "b");
      net.hidden.push_back(std::move(layer));
      nn::BatchNormParams<S> norm;
      norm.gamma = read_row<S>(file, base + "gamma");
      norm.beta = read_row<S>(file, base + "beta");
      norm.running_mean = read_row<S>(file, "running/" + base + "mean");
      norm.running_var = read_row<S>(file, "running/" + base + "var");
      norm.epsilon = static_cast<S>(bn_epsilon);
      norm.momentum = static_cast<S>(bn_momentum);
      net.norms.push_back(std::move(norm));
    }
    const std::string base = prefix + "/" + std::to_string(hidden.size()) + "/";
    net.head.weights = read_mat<S>(file, base + "W");
    net.head.bias = read_row<S>(file, base + "b");
  };
  read_net(model.mua_net, "mua_net", meta.value("mua_hidden", std::vector<Index>{}));
  read_net(model.mus_net, "mus_net", meta.value("mus_hidden", std::vector<Index>{}));

  if (model.wavelength_count() != out.grid.size()) {
    throw IoError(path.string() + ": checkpoint grid and tensors disagree");
  }
  return out;
}

template void save_checkpoint<float>(const std::filesystem::path&, const ModelParams<float>&,
                                     const WavelengthGrid&, const Optimizer<float>*);
template void save_checkpoint<double>(const std::filesystem::path&, const ModelParams<double>&,
                                      const WavelengthGrid&, const Optimizer<double>*);
template LoadedModel<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedModel<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace spoi
