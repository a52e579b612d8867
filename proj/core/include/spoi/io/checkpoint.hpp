#pragma once

#include <filesystem>

#include "spoi/model/spoi_ae.hpp"
#include "spoi/wavelength_grid.hpp"

namespace spoi {

/// Serializes the model (and, when given, the optimizer moments under the
/// reserved `adam/` prefix) into the tensor-record container. Record order is
/// fixed, so identical training runs produce byte-identical files.
template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<S>& model,
                     const WavelengthGrid& grid, const Optimizer<S>* optimizer = nullptr);

template <typename S>
struct LoadedModel {
  ModelParams<S> model;
  WavelengthGrid grid = WavelengthGrid::default_grid();
};

/// Rebuilds a model from a checkpoint; the pseudoinverse is recomputed from
/// the stored spectra rather than stored.
template <typename S>
LoadedModel<S> load_checkpoint(const std::filesystem::path& path);

extern template void save_checkpoint<float>(const std::filesystem::path&,
                                            const ModelParams<float>&, const WavelengthGrid&,
                                            const Optimizer<float>*);
extern template void save_checkpoint<double>(const std::filesystem::path&,
                                             const ModelParams<double>&, const WavelengthGrid&,
                                             const Optimizer<double>*);
extern template LoadedModel<float> load_checkpoint<float>(const std::filesystem::path&);
extern template LoadedModel<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace spoi
