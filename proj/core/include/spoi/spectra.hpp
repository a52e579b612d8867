#pragma once

#include <string>
#include <vector>

#include "spoi/types.hpp"
#include "spoi/wavelength_grid.hpp"

namespace spoi {

/// Relative chromophore concentrations, one pixel per row (I x N, >= 0).
using ConcentrationMatrix = Matd;

/// Chromophore absorption spectra with a cached Moore-Penrose pseudoinverse.
///
/// `values` is L x N, nonnegative, full column rank. `pinv` (N x L) is only
/// valid while `pinv_stale` is false; mutate `values` through with_values()
/// so staleness is tracked.
struct SpectraMatrix {
  Matd values;
  std::vector<std::string> names;
  Matd pinv;
  bool pinv_stale = true;

  Index wavelength_count() const { return values.rows(); }
  Index chromophore_count() const { return values.cols(); }

  /// Copy with replaced values and a stale pseudoinverse.
  SpectraMatrix with_values(Matd new_values) const;
};

/// Tabulated molar extinction table backing the literature spectra.
struct HbTable {
  std::vector<double> wavelength_nm;
  std::vector<double> hbo2;
  std::vector<double> hhb;
};

/// Built-in oxy/deoxy-hemoglobin extinction table (650-1000 nm, 10 nm step).
const HbTable& builtin_hb_table();

/// Resamples the requested chromophores onto `grid` by linear interpolation
/// and rescales so the maximum entry equals 1. Columns follow request order;
/// the canonical order is {"HbO2", "HHb"}. Pseudoinverse is precomputed.
///
/// Throws UnknownChromophore or GridOutOfTabulatedRange.
SpectraMatrix literature_spectra(const WavelengthGrid& grid,
                                 const std::vector<std::string>& chromophores);

/// Same resampling against a caller-supplied table.
SpectraMatrix spectra_from_table(const HbTable& table, const WavelengthGrid& grid,
                                 const std::vector<std::string>& chromophores);

/// Recomputes the pseudoinverse by SVD with relative cutoff 1e-12.
/// Throws RankDeficientSpectra when the smallest singular value falls below
/// 1e-12 times the largest.
SpectraMatrix compute_pinv(SpectraMatrix spectra);

/// Rectified least-squares unmixing: ReLU(mu_a * pinv^T), I x N.
/// Requires a fresh pseudoinverse and mu_a with L columns.
ConcentrationMatrix unmix(const SpectraMatrix& spectra, const Matd& mu_a);

/// Rank-N reconstruction: ReLU(conc * values^T), I x L.
Matd reconstruct_mu_a(const SpectraMatrix& spectra, const ConcentrationMatrix& conc);

/// CSV asset I/O, header `wavelength_nm,hbo2,hhb`.
HbTable load_hb_csv(const std::string& path);
void save_spectra_csv(const std::string& path, const WavelengthGrid& grid,
                      const SpectraMatrix& spectra);

}  // namespace spoi
