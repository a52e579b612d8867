#pragma once

#include <Eigen/Dense>

namespace spoi {

using Index = Eigen::Index;

/// Row-major dense matrix; pixel data is stored one spectrum per row, which
/// matches the row-major layout of every on-disk tensor.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row vector, used for per-wavelength quantities broadcast over a batch.
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matd = Mat<double>;
using Matf = Mat<float>;
using Vecd = Vec<double>;
using Vecf = Vec<float>;
using RowVecd = RowVec<double>;
using RowVecf = RowVec<float>;

}  // namespace spoi
