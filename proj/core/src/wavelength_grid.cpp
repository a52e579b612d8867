#include "spoi/wavelength_grid.hpp"

#include <utility>

#include "spoi/errors.hpp"

namespace spoi {

WavelengthGrid::WavelengthGrid(std::vector<double> wavelengths_nm)
    : values_(std::move(wavelengths_nm)) {
  if (values_.size() < 2) {
    throw ConfigError("wavelength grid needs at least two entries");
  }
  for (std::size_t i = 1; i < values_.size(); ++i) {
    if (!(values_[i] > values_[i - 1])) {
      throw ConfigError("wavelength grid must be strictly increasing");
    }
  }
}

WavelengthGrid WavelengthGrid::default_grid() {
  std::vector<double> nm;
  nm.reserve(146);
  for (int w = 680; w <= 970; w += 2) nm.push_back(static_cast<double>(w));
  return WavelengthGrid(std::move(nm));
}

}  // namespace spoi
