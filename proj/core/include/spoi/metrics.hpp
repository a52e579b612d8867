#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spoi/pixel_batch.hpp"
#include "spoi/spectra.hpp"
#include "spoi/types.hpp"
#include "spoi/wavelength_grid.hpp"

namespace spoi {

/// Guard added to the norm product inside the spectral angle. Keeps zero rows
/// finite at the cost of a small angle bias: for unit-norm inputs
/// SAD(p, p) is about 9e-5 instead of 0.
inline constexpr double kSadEpsilon = 1e-8;

/// Oxygen saturation per pixel, in percent. Pixels with zero total hemoglobin
/// have no defined saturation and carry NaN; aggregates must skip them.
struct So2Map {
  Vecd values;

  Index pixel_count() const { return values.size(); }
  bool defined(Index i) const { return !std::isnan(values[i]); }
};

struct EvalReport {
  double mse = 0.0;
  double msad = 0.0;
  Vecd r2_per_wavelength;  // NaN where the input column has zero variance
  double r2_mean = 0.0;    // over defined wavelengths only
  double r2_std = 0.0;     // population std over defined wavelengths
  Vecd avg_spectrum_input;
  Vecd avg_spectrum_recon;
};

/// Mean over pixels of the squared L2 row error.
double mse(const Matd& input, const Matd& recon);

/// Spectral angular distance of two rows, in [0, 1].
double sad(const RowVecd& p, const RowVecd& p_hat);

/// Mean SAD over pixel rows.
double msad(const Matd& input, const Matd& recon);

/// R^2 = 1 - FVU per wavelength; NaN marks zero-variance input columns.
Vecd r2_per_wavelength(const Matd& input, const Matd& recon);

Vecd average_spectrum(const Matd& pixels);

So2Map so2(const ConcentrationMatrix& conc);

/// Mean absolute SO2 difference in percentage points over masked pixels where
/// both maps are defined.
double so2_mae(const So2Map& estimate, const So2Map& truth,
               const std::vector<std::uint8_t>& mask);

EvalReport evaluate(const PixelBatch& input, const Matd& recon);

std::string report_to_json(const EvalReport& report);

/// Per-wavelength series as `wavelength_nm,r2,avg_input,avg_recon`.
void write_report_csv(const std::filesystem::path& path, const WavelengthGrid& grid,
                      const EvalReport& report);

}  // namespace spoi
