#pragma once

#include <cmath>
#include <string>

#include "spoi/errors.hpp"
#include "spoi/nn/activations.hpp"
#include "spoi/nn/batch_norm.hpp"
#include "spoi/rng.hpp"
#include "spoi/types.hpp"

namespace spoi::nn {

/// One fully-connected layer: y = x W^T + b with W of shape out x in.
template <typename S>
struct DenseLayerParams {
  Mat<S> weights;
  RowVec<S> bias;

  Index in_features() const { return weights.cols(); }
  Index out_features() const { return weights.rows(); }

  /// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero bias.
  static DenseLayerParams init(Index in, Index out, Rng& rng) {
    DenseLayerParams p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    p.weights.resize(out, in);
    for (Index r = 0; r < out; ++r) {
      for (Index c = 0; c < in; ++c) p.weights(r, c) = static_cast<S>(rng.uniform(-bound, bound));
    }
    p.bias = RowVec<S>::Zero(out);
    return p;
  }
};

template <typename S>
struct DenseLayerGrads {
  Mat<S> weights;
  RowVec<S> bias;
};

template <typename S>
struct BatchNormGrads {
  RowVec<S> gamma;
  RowVec<S> beta;
};

namespace detail {

template <typename S>
void check_dense_input(const Mat<S>& x, const DenseLayerParams<S>& layer, const char* who) {
  if (x.cols() != layer.in_features()) {
    throw DimensionMismatch(std::string(who) + ": input has " + std::to_string(x.cols()) +
                            " columns, layer expects " + std::to_string(layer.in_features()));
  }
}

}  // namespace detail

/// Cache for the f block: affine -> LReLU -> +beta -> BN -> *gamma.
template <typename S>
struct BlockFCache {
  Mat<S> input;
  Mat<S> pre_act;  // x W^T + b, consumed by the LReLU slope
  BatchNormCache<S> bn;
};

template <typename S>
struct BlockGCache {
  Mat<S> input;
  Mat<S> pre_act;
};

template <typename S>
Mat<S> block_f(const Mat<S>& x, const DenseLayerParams<S>& layer, BatchNormParams<S>& bn,
               Mode mode, BlockFCache<S>* cache = nullptr) {
  detail::check_dense_input(x, layer, "block_f");
  if (layer.out_features() != bn.feature_count()) {
    throw DimensionMismatch("block_f: layer emits " + std::to_string(layer.out_features()) +
                            " features, batch norm expects " +
                            std::to_string(bn.feature_count()));
  }
  Mat<S> pre = (x * layer.weights.transpose()).rowwise() + layer.bias;
  Mat<S> shifted = lrelu(pre).rowwise() + bn.beta;
  BatchNormCache<S> local;
  Mat<S> normalized = batch_norm(shifted, bn, mode, &local);
  Mat<S> out = (normalized.array().rowwise() * bn.gamma.array()).matrix();
  if (cache != nullptr) {
    cache->input = x;
    cache->pre_act = std::move(pre);
    cache->bn = std::move(local);
  }
  return out;
}

/// Backward through an f block. Returns the gradient with respect to x and
/// fills the parameter gradients. Note that in train mode the beta gradient
/// vanishes analytically: the batch mean subtraction cancels any constant
/// shift, so d(out)/d(beta) sums to zero over the batch.
template <typename S>
Mat<S> block_f_backward(const Mat<S>& grad_out, const DenseLayerParams<S>& layer,
                        const BatchNormParams<S>& bn, const BlockFCache<S>& cache,
                        DenseLayerGrads<S>& layer_grads, BatchNormGrads<S>& bn_grads) {
  bn_grads.gamma = (grad_out.array() * cache.bn.normalized.array()).colwise().sum().matrix();
  Mat<S> grad_norm = (grad_out.array().rowwise() * bn.gamma.array()).matrix();
  Mat<S> grad_shifted = batch_norm_backward(grad_norm, cache.bn);
  bn_grads.beta = grad_shifted.colwise().sum();
  Mat<S> grad_pre = (grad_shifted.array() * lrelu_slope(cache.pre_act).array()).matrix();
  layer_grads.weights = grad_pre.transpose() * cache.input;
  layer_grads.bias = grad_pre.colwise().sum();
  return grad_pre * layer.weights;
}

template <typename S>
Mat<S> block_g(const Mat<S>& x, const DenseLayerParams<S>& layer,
               BlockGCache<S>* cache = nullptr) {
  detail::check_dense_input(x, layer, "block_g");
  Mat<S> pre = (x * layer.weights.transpose()).rowwise() + layer.bias;
  Mat<S> out = relu(pre);
  if (cache != nullptr) {
    cache->input = x;
    cache->pre_act = std::move(pre);
  }
  return out;
}

template <typename S>
Mat<S> block_g_backward(const Mat<S>& grad_out, const DenseLayerParams<S>& layer,
                        const BlockGCache<S>& cache, DenseLayerGrads<S>& layer_grads) {
  Mat<S> grad_pre = (grad_out.array() * relu_slope(cache.pre_act).array()).matrix();
  layer_grads.weights = grad_pre.transpose() * cache.input;
  layer_grads.bias = grad_pre.colwise().sum();
  return grad_pre * layer.weights;
}

}  // namespace spoi::nn
