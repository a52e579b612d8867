#pragma once

#include "spoi/pixel_batch.hpp"
#include "spoi/spectra.hpp"
#include "spoi/types.hpp"

namespace spoi {

/// Nonnegative least squares min ||A x - b||^2 s.t. x >= 0 via the
/// Lawson-Hanson active-set method. Exact termination for small column
/// counts; KKT residuals at the solution are at rounding level.
Vecd nnls_solve(const Matd& A, const Vecd& b);

/// Per-pixel NNLS against fixed spectra, parallel over pixel rows.
/// Throws RankDeficientSpectra when the spectra lose full column rank.
ConcentrationMatrix nls_unmix(const SpectraMatrix& spectra, const PixelBatch& pixels);

}  // namespace spoi
