#include "spoi/nmf.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "spoi/nnls.hpp"

namespace spoi {

namespace {

double frobenius_residual(const ConcentrationMatrix& C, const Matd& E, const Matd& P) {
  return (C * E.transpose() - P).norm();
}

}  // namespace

NmfResult nmf_unmix(const SpectraMatrix& init_spectra, const PixelBatch& pixels, int sweeps) {
  const Matd& P = pixels.pixels;
  if (P.size() == 0 || P.maxCoeff() <= 0.0) {
    throw ZeroDataMatrix("NMF needs a nonzero data matrix");
  }
  if (P.minCoeff() < 0.0) throw ConfigError("NMF data matrix must be nonnegative");
  if (init_spectra.values.minCoeff() < 0.0) {
    throw ConfigError("NMF init spectra must be nonnegative");
  }
  if (sweeps < 0) throw ConfigError("sweep count must be nonnegative");

  const Index N = init_spectra.chromophore_count();

  NmfResult result;
  result.spectra = init_spectra.values;
  result.conc = nls_unmix(init_spectra, pixels);
  result.objective_trace.push_back(frobenius_residual(result.conc, result.spectra, P));

  Matd& E = result.spectra;
  ConcentrationMatrix& C = result.conc;

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    // HALS column updates: each block solve is an exact nonnegative
    // one-dimensional minimizer, so the objective cannot increase.
    {
      const Matd G = E.transpose() * E;  // N x N
      const Matd H = P * E;              // I x N
      for (Index n = 0; n < N; ++n) {
        const double gnn = G(n, n);
        if (gnn <= 0.0) continue;  // dead column, leave untouched
        C.col(n) = (C.col(n) + (H.col(n) - C * G.col(n)) / gnn).cwiseMax(0.0);
      }
    }
    {
      const Matd F = C.transpose() * C;  // N x N
      const Matd K = P.transpose() * C;  // L x N
      for (Index n = 0; n < N; ++n) {
        const double fnn = F(n, n);
        if (fnn <= 0.0) continue;
        E.col(n) = (E.col(n) + (K.col(n) - E * F.col(n)) / fnn).cwiseMax(0.0);
      }
    }
    // fix the scale ambiguity: spectra columns peak at 1
    for (Index n = 0; n < N; ++n) {
      const double m = E.col(n).maxCoeff();
      if (m > 0.0 && m != 1.0) {
        E.col(n) /= m;
        C.col(n) *= m;
      }
    }

    const double prev = result.objective_trace.back();
    const double cur = frobenius_residual(C, E, P);
    result.objective_trace.push_back(cur);
    if (prev <= 0.0 || (prev - cur) < kNmfRelativeTolerance * prev) break;
  }
  return result;
}

}  // namespace spoi
