#pragma once

#include <cmath>
#include <cstdint>

#include "spoi/errors.hpp"
#include "spoi/types.hpp"

namespace spoi::nn {

/// Bias-corrected Adam moments for one parameter tensor. Moments are stored
/// as generic matrices so the same state type serves weights (R x C) and the
/// various 1 x M row parameters.
template <typename S>
struct AdamState {
  Mat<S> first_moment;
  Mat<S> second_moment;
  std::int64_t step_count = 0;
  S learning_rate = S(1e-3);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps_opt = S(1e-8);
};

/// One Adam update in place. Moments are lazily sized on first use.
template <typename ParamMat>
void adam_step(ParamMat& params, const ParamMat& grads,
               AdamState<typename ParamMat::Scalar>& state) {
  using S = typename ParamMat::Scalar;
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw DimensionMismatch("adam_step: parameter and gradient shapes differ");
  }
  if (!grads.allFinite()) {
    throw NonFiniteGradient("adam_step: gradient contains NaN or Inf");
  }
  if (state.first_moment.size() == 0) {
    state.first_moment = Mat<S>::Zero(params.rows(), params.cols());
    state.second_moment = Mat<S>::Zero(params.rows(), params.cols());
  }
  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (S(1) - state.beta1) * grads;
  state.second_moment = (state.beta2 * state.second_moment.array() +
                         (S(1) - state.beta2) * grads.array().square())
                            .matrix();

  const S corr1 = S(1) - static_cast<S>(std::pow(static_cast<double>(state.beta1),
                                                 static_cast<double>(state.step_count)));
  const S corr2 = S(1) - static_cast<S>(std::pow(static_cast<double>(state.beta2),
                                                 static_cast<double>(state.step_count)));
  params.array() -= state.learning_rate *
                    (state.first_moment.array() / corr1) /
                    ((state.second_moment.array() / corr2).sqrt() + state.eps_opt);
}

}  // namespace spoi::nn
