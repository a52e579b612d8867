#pragma once

#include "spoi/errors.hpp"
#include "spoi/types.hpp"

namespace spoi {

/// A batch of sPA pixels: one spectrum per row plus the pixel's depth.
/// Datasets are globally normalized to a maximum of 1 at load time.
struct PixelBatch {
  Matd pixels;  // I x L, >= 0
  Vecd depths;  // I, mm, >= 0

  Index pixel_count() const { return pixels.rows(); }
  Index wavelength_count() const { return pixels.cols(); }

  void validate() const {
    if (pixels.rows() != depths.size()) {
      throw DimensionMismatch("pixel rows and depth entries disagree");
    }
    if (pixels.size() > 0 && pixels.minCoeff() < 0.0) {
      throw ConfigError("pixel values must be nonnegative");
    }
    if (depths.size() > 0 && depths.minCoeff() < 0.0) {
      throw ConfigError("depths must be nonnegative");
    }
  }

  /// Row subset in the given index order.
  PixelBatch select(const std::vector<std::size_t>& rows) const {
    PixelBatch out;
    out.pixels.resize(static_cast<Index>(rows.size()), pixels.cols());
    out.depths.resize(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.pixels.row(static_cast<Index>(i)) = pixels.row(static_cast<Index>(rows[i]));
      out.depths(static_cast<Index>(i)) = depths(static_cast<Index>(rows[i]));
    }
    return out;
  }
};

}  // namespace spoi
