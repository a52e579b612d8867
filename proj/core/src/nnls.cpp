#include "spoi/nnls.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <vector>

#include "spoi/parallel.hpp"

namespace spoi {

namespace {

// Least squares over the passive column subset, zeros elsewhere.
Vecd passive_least_squares(const Matd& A, const Vecd& b, const std::vector<bool>& passive,
                           Index passive_count) {
  const Index m = A.rows();
  const Index n = A.cols();
  Matd Ap(m, passive_count);
  std::vector<Index> cols;
  cols.reserve(static_cast<std::size_t>(passive_count));
  for (Index j = 0; j < n; ++j) {
    if (passive[static_cast<std::size_t>(j)]) {
      Ap.col(static_cast<Index>(cols.size())) = A.col(j);
      cols.push_back(j);
    }
  }
  const Vecd zp = Ap.colPivHouseholderQr().solve(b);
  Vecd z = Vecd::Zero(n);
  for (std::size_t k = 0; k < cols.size(); ++k) z(cols[k]) = zp(static_cast<Index>(k));
  return z;
}

}  // namespace

Vecd nnls_solve(const Matd& A, const Vecd& b) {
  const Index n = A.cols();
  if (A.rows() != b.size()) throw DimensionMismatch("nnls: rows of A and b disagree");

  Vecd x = Vecd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  Index passive_count = 0;

  Vecd w = A.transpose() * b;  // gradient of -0.5||Ax-b||^2 at x = 0
  const double tol =
      1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff()) + std::numeric_limits<double>::denorm_min();

  const int max_outer = 3 * static_cast<int>(n) + 30;
  for (int outer = 0; outer < max_outer; ++outer) {
    // pick the most violated free coordinate
    Index t = -1;
    double wmax = tol;
    for (Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > wmax) {
        wmax = w(j);
        t = j;
      }
    }
    if (t < 0) break;  // KKT satisfied
    passive[static_cast<std::size_t>(t)] = true;
    ++passive_count;

    // inner loop: keep the passive solution feasible
    for (int inner = 0; inner < max_outer; ++inner) {
      const Vecd z = passive_least_squares(A, b, passive, passive_count);
      bool feasible = true;
      for (Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
          feasible = false;
          break;
        }
      }
      if (feasible) {
        x = z;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
          const double step = x(j) / (x(j) - z(j));
          alpha = std::min(alpha, step);
        }
      }
      x += alpha * (z - x);
      for (Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x(j) <= 1e-14 * std::abs(x.maxCoeff())) {
          x(j) = 0.0;
          passive[static_cast<std::size_t>(j)] = false;
          --passive_count;
        }
      }
    }
    w = A.transpose() * (b - A * x);
  }
  return x;
}

ConcentrationMatrix nls_unmix(const SpectraMatrix& spectra, const PixelBatch& pixels) {
  const Matd& E = spectra.values;
  if (pixels.wavelength_count() != E.rows()) {
    throw DimensionMismatch("pixel spectra length does not match spectra rows");
  }
  {
    Eigen::JacobiSVD<Matd> svd(E);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 1e-12 * sv(0))) {
      throw RankDeficientSpectra("nls_unmix requires full column rank spectra");
    }
  }

  const Index I = pixels.pixel_count();
  ConcentrationMatrix conc(I, E.cols());
  parallel_for(static_cast<std::size_t>(I), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Vecd b = pixels.pixels.row(static_cast<Index>(i)).transpose();
      conc.row(static_cast<Index>(i)) = nnls_solve(E, b).transpose();
    }
  });
  return conc;
}

}  // namespace spoi
