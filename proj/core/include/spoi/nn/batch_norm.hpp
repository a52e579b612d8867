#pragma once

#include "spoi/errors.hpp"
#include "spoi/types.hpp"

namespace spoi::nn {

enum class Mode { train, eval };

/// Per-feature normalization state. gamma/beta are the learnable affine
/// parameters; they are applied by the owning block, not by batch_norm itself,
/// because the block order is affine -> LReLU -> +beta -> normalize -> *gamma.
template <typename S>
struct BatchNormParams {
  RowVec<S> gamma;
  RowVec<S> beta;
  RowVec<S> running_mean;
  RowVec<S> running_var;
  S momentum = S(0.1);
  S epsilon = S(1e-5);

  static BatchNormParams init(Index features) {
    BatchNormParams p;
    p.gamma = RowVec<S>::Ones(features);
    p.beta = RowVec<S>::Zero(features);
    p.running_mean = RowVec<S>::Zero(features);
    p.running_var = RowVec<S>::Ones(features);
    return p;
  }

  Index feature_count() const { return gamma.cols(); }
};

/// Everything the backward pass needs from one normalization call.
template <typename S>
struct BatchNormCache {
  Mat<S> normalized;   // (x - mean) / sqrt(var + eps)
  RowVec<S> inv_std;   // 1 / sqrt(var + eps) for the stats actually used
  Mode mode = Mode::train;
};

/// (X - E[X]) / sqrt(Var[X] + EPSILON) with per-feature batch statistics in
/// train mode (biased variance) or the stored running statistics in eval mode.
/// Train mode folds the fresh statistics into the running estimates.
template <typename S>
Mat<S> batch_norm(const Mat<S>& x, BatchNormParams<S>& params, Mode mode,
                  BatchNormCache<S>* cache = nullptr) {
  if (x.cols() != params.feature_count()) {
    throw DimensionMismatch("batch_norm: input has " + std::to_string(x.cols()) +
                            " features, params expect " +
                            std::to_string(params.feature_count()));
  }

  RowVec<S> mean, var;
  if (mode == Mode::train) {
    if (x.rows() < 2) {
      throw BatchTooSmall("batch_norm in train mode needs at least 2 rows, got " +
                          std::to_string(x.rows()));
    }
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
    params.running_mean = (S(1) - params.momentum) * params.running_mean + params.momentum * mean;
    params.running_var = (S(1) - params.momentum) * params.running_var + params.momentum * var;
  } else {
    mean = params.running_mean;
    var = params.running_var;
  }

  const RowVec<S> inv_std = (var.array() + params.epsilon).rsqrt().matrix();
  Mat<S> out = ((x.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
  if (cache != nullptr) {
    cache->normalized = out;
    cache->inv_std = inv_std;
    cache->mode = mode;
  }
  return out;
}

/// Gradient with respect to the normalization input. In train mode the batch
/// statistics depend on every row, so each column couples across the batch:
///   dx_i = s * (dy_i - mean(dy) - y_i * mean(dy .* y))
/// with y the normalized output and s the cached inverse std. Eval mode is a
/// plain per-row rescale.
template <typename S>
Mat<S> batch_norm_backward(const Mat<S>& grad_out, const BatchNormCache<S>& cache) {
  if (cache.mode == Mode::eval) {
    return (grad_out.array().rowwise() * cache.inv_std.array()).matrix();
  }
  const RowVec<S> mean_dy = grad_out.colwise().mean();
  const RowVec<S> mean_dyy =
      (grad_out.array() * cache.normalized.array()).colwise().mean().matrix();
  Mat<S> dx = grad_out.rowwise() - mean_dy;
  dx.array() -= cache.normalized.array().rowwise() * mean_dyy.array();
  dx.array().rowwise() *= cache.inv_std.array();
  return dx;
}

}  // namespace spoi::nn
