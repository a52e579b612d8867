#pragma once

#include <vector>

#include "spoi/types.hpp"

namespace spoi {

/// Ordered imaging wavelengths defining the spectral axis.
/// Strictly increasing, at least two entries.
class WavelengthGrid {
 public:
  explicit WavelengthGrid(std::vector<double> wavelengths_nm);

  /// 680 to 970 nm inclusive at 2 nm spacing (L = 146).
  static WavelengthGrid default_grid();

  Index size() const { return static_cast<Index>(values_.size()); }
  double operator[](Index l) const { return values_[static_cast<std::size_t>(l)]; }
  const std::vector<double>& values() const { return values_; }
  double min_nm() const { return values_.front(); }
  double max_nm() const { return values_.back(); }

  bool operator==(const WavelengthGrid& other) const { return values_ == other.values_; }

 private:
  std::vector<double> values_;
};

}  // namespace spoi
