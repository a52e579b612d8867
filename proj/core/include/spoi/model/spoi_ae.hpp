#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spoi/forward.hpp"
#include "spoi/metrics.hpp"
#include "spoi/nn/adam.hpp"
#include "spoi/nn/dense.hpp"
#include "spoi/pixel_batch.hpp"
#include "spoi/spectra.hpp"
#include "spoi/types.hpp"

namespace spoi {

/// Fully-connected encoder: a chain of f blocks closed by one g block, so its
/// output is nonnegative by construction.
template <typename S>
struct FcnnParams {
  std::vector<nn::DenseLayerParams<S>> hidden;
  std::vector<nn::BatchNormParams<S>> norms;  // one per hidden layer
  nn::DenseLayerParams<S> head;
};

template <typename S>
struct FcnnGrads {
  std::vector<nn::DenseLayerGrads<S>> hidden;
  std::vector<nn::BatchNormGrads<S>> norms;
  nn::DenseLayerGrads<S> head;
};

/// Hidden widths are configuration; depths are architectural (two f blocks in
/// the absorption net, three in the scattering net) and therefore fixed.
struct ModelConfig {
  std::vector<Index> mua_hidden = {256, 256};
  std::vector<Index> mus_hidden = {256, 256, 256};
};

template <typename S>
struct ModelParams {
  FcnnParams<S> mua_net;  // g(f(f(P)))
  FcnnParams<S> mus_net;  // g(f(f(f(P))))
  /// Kept in double so the pseudoinverse is computed at full precision even
  /// for float models; forward passes cast on the fly.
  SpectraMatrix spectra;
  RowVec<S> gamma_phi0;
  bool adjust_spectra = false;

  Index wavelength_count() const { return gamma_phi0.cols(); }
};

struct TrainConfig {
  double alpha = 100.0;
  double beta = 5.0;
  double learning_rate = 1e-3;
  Index batch_size = 1024;
  int epochs = 200;
  std::uint64_t seed = 1;
  bool adjust_spectra = false;
  /// Fraction of pixels held out from gradient updates; reported back through
  /// TrainResult so callers can evaluate on unseen pixels.
  double eval_fraction = 0.0;
};

struct LossBreakdown {
  double mse = 0.0;
  double msad = 0.0;
  double total = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double train_msad = 0.0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> eval_rows;
};

struct UnmixResult {
  ConcentrationMatrix conc;
  Matd mu_a;
  Matd mu_s_prime;
  Matd mu_a_hat;
  Matd pressure_hat;
  So2Map so2;
};

template <typename S>
struct EncoderCache {
  std::vector<nn::BlockFCache<S>> f;
  nn::BlockGCache<S> g;
};

template <typename S>
struct DecodeCache {
  Mat<S> conc_pre;      // mu_a E+^T before rectification
  Mat<S> conc;
  Mat<S> mu_a_hat_pre;  // conc E^T before rectification
  Mat<S> mu_a_hat;
  Mat<S> m_eff;
  Mat<S> psi;           // expm1(-m_eff rho), in (-1, 0]
  Mat<S> pressure_hat;
};

template <typename S>
struct ForwardCache {
  EncoderCache<S> mua;
  EncoderCache<S> mus;
  Mat<S> mu_a;
  Mat<S> mu_s_prime;
  DecodeCache<S> dec;
};

template <typename S>
struct DecodeResult {
  Mat<S> conc;
  Mat<S> mu_a_hat;
  Mat<S> pressure_hat;
};

template <typename S>
struct ModelGrads {
  FcnnGrads<S> mua_net;
  FcnnGrads<S> mus_net;
  Mat<S> spectra;        // L x N; empty unless the model adjusts its spectra
  RowVec<S> gamma_phi0;  // 1 x L
};

/// Builds a model around literature (or caller-supplied) spectra. Weight
/// draws are ordered: absorption net layers first, then scattering net, so a
/// fixed seed pins every parameter.
template <typename S>
ModelParams<S> init_model(const SpectraMatrix& spectra, const ModelConfig& config,
                          bool adjust_spectra, std::uint64_t seed);

/// Runs both encoders. Train mode updates batch-norm running statistics,
/// hence the mutable model reference.
template <typename S>
OpticalFieldsT<S> encode(ModelParams<S>& model, const PixelBatch& batch, nn::Mode mode);

/// Physics decoder: latent unmixing against the model spectra, reconstruction
/// of absorption, then pressure via the expm1 decomposition of the fluence.
/// The pseudoinverse is used as a constant; StalePseudoinverse guards misuse.
template <typename S>
DecodeResult<S> decode(const ModelParams<S>& model, const OpticalFieldsT<S>& fields,
                       const Vec<S>& depths, DecodeCache<S>* cache = nullptr);

/// Full differentiable pipeline on an S-typed batch; fills `cache` for the
/// matching backward_pass.
template <typename S>
void forward_pass(ModelParams<S>& model, const Mat<S>& pixels, const Vec<S>& depths,
                  nn::Mode mode, ForwardCache<S>& cache);

/// alpha * MSE + beta * MSAD with optional gradient in `grad_pressure`.
template <typename S>
LossBreakdown composite_loss(const Mat<S>& pixels, const Mat<S>& pressure_hat, double alpha,
                             double beta, Mat<S>* grad_pressure = nullptr);

LossBreakdown loss(const PixelBatch& batch, const Matd& pressure_hat, const TrainConfig& config);

/// Hand-derived reverse pass for the whole pipeline. The pseudoinverse factor
/// is treated as a constant; spectra gradients flow only through the explicit
/// reconstruction factor and are produced only when the model adjusts them.
template <typename S>
ModelGrads<S> backward_pass(const ModelParams<S>& model, const Vec<S>& depths,
                            const ForwardCache<S>& cache, const Mat<S>& grad_pressure);

/// Adam over every learnable tensor in a fixed traversal order. After each
/// step the spectra (when learnable) and gamma_phi0 are clamped to the
/// nonnegative orthant and the pseudoinverse is recomputed.
template <typename S>
class Optimizer {
 public:
  explicit Optimizer(double learning_rate) : learning_rate_(learning_rate) {}

  void step(ModelParams<S>& model, const ModelGrads<S>& grads);

  std::int64_t step_count() const { return step_count_; }
  const std::vector<nn::AdamState<S>>& states() const { return states_; }
  std::vector<nn::AdamState<S>>& states() { return states_; }

 private:
  double learning_rate_;
  std::int64_t step_count_ = 0;
  std::vector<nn::AdamState<S>> states_;
};

/// Shuffled mini-batch training. Throws NonFiniteLoss with the offending
/// epoch/batch; returns per-epoch statistics over the training rows.
template <typename S>
TrainResult train(ModelParams<S>& model, const PixelBatch& data, const TrainConfig& config);

/// Eval-mode inference; per-pixel independent and read-only on the model.
template <typename S>
UnmixResult infer(const ModelParams<S>& model, const PixelBatch& batch);

extern template ModelParams<float> init_model<float>(const SpectraMatrix&, const ModelConfig&,
                                                     bool, std::uint64_t);
extern template ModelParams<double> init_model<double>(const SpectraMatrix&, const ModelConfig&,
                                                       bool, std::uint64_t);
extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace spoi
