#pragma once

#include "spoi/types.hpp"

namespace spoi::nn {

/// Negative-side slope of the leaky rectifier used inside every f block.
inline constexpr double kLeakySlope = 0.01;

/// At exactly zero both rectifiers use the right derivative, i.e. slope 1.
/// Gradient checks steer clear of the kink, so the choice only matters for
/// exact-zero activations (common right after initialization with b = 0).

template <typename S>
Mat<S> lrelu(const Mat<S>& x) {
  return (x.array() >= S(0)).select(x, x * S(kLeakySlope));
}

template <typename S>
Mat<S> relu(const Mat<S>& x) {
  return x.cwiseMax(S(0));
}

/// d lrelu(u)/du evaluated elementwise at the cached pre-activation.
template <typename S>
Mat<S> lrelu_slope(const Mat<S>& pre_act) {
  return (pre_act.array() >= S(0)).select(Mat<S>::Ones(pre_act.rows(), pre_act.cols()),
                                          Mat<S>::Constant(pre_act.rows(), pre_act.cols(),
                                                           S(kLeakySlope)));
}

template <typename S>
Mat<S> relu_slope(const Mat<S>& pre_act) {
  return (pre_act.array() >= S(0)).template cast<S>().matrix();
}

}  // namespace spoi::nn
