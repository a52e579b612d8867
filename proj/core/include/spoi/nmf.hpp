#pragma once

#include <vector>

#include "spoi/pixel_batch.hpp"
#include "spoi/spectra.hpp"
#include "spoi/types.hpp"

namespace spoi {

/// Factorization result P ~ conc * spectra^T with the Frobenius residual
/// recorded after initialization and after every sweep (non-increasing).
struct NmfResult {
  ConcentrationMatrix conc;  // I x N
  Matd spectra;              // L x N, columns rescaled to max 1
  std::vector<double> objective_trace;
};

inline constexpr int kNmfDefaultSweeps = 500;
inline constexpr double kNmfRelativeTolerance = 1e-8;

/// Alternating HALS updates of conc and spectra starting from literature
/// spectra; conc is initialized by per-pixel NNLS against init_spectra
/// (so sweeps = 0 returns exactly the NLS solution). Stops after `sweeps`
/// sweeps or when the relative objective decrease over a sweep falls
/// below kNmfRelativeTolerance.
///
/// Throws ZeroDataMatrix when the pixel matrix is identically zero.
NmfResult nmf_unmix(const SpectraMatrix& init_spectra, const PixelBatch& pixels,
                    int sweeps = kNmfDefaultSweeps);

}  // namespace spoi
