#include "spoi/model/spoi_ae.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "spoi/errors.hpp"
#include "spoi/rng.hpp"

namespace spoi {

namespace {

template <typename S>
void check_widths(const std::vector<Index>& widths, std::size_t expected, const char* net) {
  if (widths.size() != expected) {
    throw ConfigError(std::string(net) + " needs exactly " + std::to_string(expected) +
                      " hidden widths, got " + std::to_string(widths.size()));
  }
  for (const Index w : widths) {
    if (w < 1) throw ConfigError(std::string(net) + " hidden widths must be positive");
  }
}

template <typename S>
FcnnParams<S> init_net(Index io_width, const std::vector<Index>& hidden, Rng& rng) {
  FcnnParams<S> net;
  Index in = io_width;
  for (const Index width : hidden) {
    net.hidden.push_back(nn::DenseLayerParams<S>::init(in, width, rng));
    net.norms.push_back(nn::BatchNormParams<S>::init(width));
    in = width;
  }
  net.head = nn::DenseLayerParams<S>::init(in, io_width, rng);
  return net;
}

template <typename S>
Mat<S> encoder_forward(FcnnParams<S>& net, const Mat<S>& x, nn::Mode mode,
                       EncoderCache<S>* cache) {
  if (cache != nullptr) cache->f.resize(net.hidden.size());
  Mat<S> h = x;
  for (std::size_t j = 0; j < net.hidden.size(); ++j) {
    h = nn::block_f(h, net.hidden[j], net.norms[j], mode, cache ? &cache->f[j] : nullptr);
  }
  return nn::block_g(h, net.head, cache ? &cache->g : nullptr);
}

template <typename S>
Mat<S> encoder_backward(const FcnnParams<S>& net, const EncoderCache<S>& cache,
                        const Mat<S>& grad_out, FcnnGrads<S>& grads) {
  grads.hidden.resize(net.hidden.size());
  grads.norms.resize(net.norms.size());
  Mat<S> g = nn::block_g_backward(grad_out, net.head, cache.g, grads.head);
  for (std::size_t j = net.hidden.size(); j-- > 0;) {
    g = nn::block_f_backward(g, net.hidden[j], net.norms[j], cache.f[j], grads.hidden[j],
                             grads.norms[j]);
  }
  return g;
}

/// Elementwise 1/(2m) with the convention that the sqrt kink at m = 0
/// contributes nothing (the one-sided limits of both chain-rule products
/// vanish there because mu_a_hat = 0 forces them to).
template <typename S>
Mat<S> half_inverse(const Mat<S>& m_eff) {
  return m_eff.unaryExpr([](S m) { return m > S(0) ? S(1) / (S(2) * m) : S(0); });
}

template <typename S>
Mat<S> step_mask(const Mat<S>& pre) {
  return (pre.array() >= S(0)).template cast<S>().matrix();
}

template <typename S>
void check_loss_shapes(const Mat<S>& pixels, const Mat<S>& pressure_hat) {
  if (pixels.rows() != pressure_hat.rows() || pixels.cols() != pressure_hat.cols()) {
    throw DimensionMismatch("loss: pixel and reconstruction shapes differ");
  }
  if (pixels.rows() == 0) throw EmptyBatch("loss: no pixels");
}

void check_train_config(const TrainConfig& config) {
  if (config.alpha < 0 || config.beta < 0) throw ConfigError("loss weights must be nonnegative");
  if (config.learning_rate <= 0) throw ConfigError("learning_rate must be positive");
  if (config.batch_size < 2) throw ConfigError("batch_size must be at least 2 (batch norm)");
  if (config.epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (config.eval_fraction < 0 || config.eval_fraction >= 1) {
    throw ConfigError("eval_fraction must lie in [0, 1)");
  }
}

}  // namespace

template <typename S>
ModelParams<S> init_model(const SpectraMatrix& spectra, const ModelConfig& config,
                          bool adjust_spectra, std::uint64_t seed) {
  check_widths<S>(config.mua_hidden, 2, "absorption net");
  check_widths<S>(config.mus_hidden, 3, "scattering net");
  ModelParams<S> model;
  model.spectra = spectra.pinv_stale ? compute_pinv(spectra) : spectra;
  model.adjust_spectra = adjust_spectra;

  const Index L = model.spectra.wavelength_count();
  Rng rng(seed);
  model.mua_net = init_net<S>(L, config.mua_hidden, rng);
  model.mus_net = init_net<S>(L, config.mus_hidden, rng);
  model.gamma_phi0 = RowVec<S>::Ones(L);
  return model;
}

template <typename S>
OpticalFieldsT<S> encode(ModelParams<S>& model, const PixelBatch& batch, nn::Mode mode) {
  if (batch.wavelength_count() != model.wavelength_count()) {
    throw DimensionMismatch("encode: batch has " + std::to_string(batch.wavelength_count()) +
                            " wavelengths, model expects " +
                            std::to_string(model.wavelength_count()));
  }
  const Mat<S> x = batch.pixels.template cast<S>();
  OpticalFieldsT<S> fields;
  fields.mu_a = encoder_forward<S>(model.mua_net, x, mode, nullptr);
  fields.mu_s_prime = encoder_forward<S>(model.mus_net, x, mode, nullptr);
  return fields;
}

template <typename S>
DecodeResult<S> decode(const ModelParams<S>& model, const OpticalFieldsT<S>& fields,
                       const Vec<S>& depths, DecodeCache<S>* cache) {
  if (model.spectra.pinv_stale) {
    throw StalePseudoinverse("decode: spectra changed without a pseudoinverse refresh");
  }
  detail::check_forward_shapes<S>(fields, nullptr);
  if (fields.mu_a.cols() != model.wavelength_count()) {
    throw DimensionMismatch("decode: fields and model wavelength counts differ");
  }
  if (depths.size() != fields.mu_a.rows()) {
    throw DimensionMismatch("decode: depths length does not match pixel count");
  }

  const Mat<S> spectra = model.spectra.values.template cast<S>();
  const Mat<S> pinv = model.spectra.pinv.template cast<S>();

  DecodeCache<S> local;
  local.conc_pre = fields.mu_a * pinv.transpose();
  local.conc = nn::relu(local.conc_pre);
  local.mu_a_hat_pre = local.conc * spectra.transpose();
  local.mu_a_hat = nn::relu(local.mu_a_hat_pre);
  local.m_eff = effective_attenuation<S>({local.mu_a_hat, fields.mu_s_prime});
  local.psi = (-(local.m_eff.array().colwise() * depths.array()))
                  .unaryExpr([](S v) { return static_cast<S>(std::expm1(v)); })
                  .matrix();
  local.pressure_hat =
      (((local.psi.array() + S(1)) * local.mu_a_hat.array()).rowwise() *
       model.gamma_phi0.array())
          .matrix();

  DecodeResult<S> out{local.conc, local.mu_a_hat, local.pressure_hat};
  if (cache != nullptr) *cache = std::move(local);
  return out;
}

template <typename S>
void forward_pass(ModelParams<S>& model, const Mat<S>& pixels, const Vec<S>& depths,
                  nn::Mode mode, ForwardCache<S>& cache) {
  cache.mu_a = encoder_forward(model.mua_net, pixels, mode, &cache.mua);
  cache.mu_s_prime = encoder_forward(model.mus_net, pixels, mode, &cache.mus);
  decode<S>(model, {cache.mu_a, cache.mu_s_prime}, depths, &cache.dec);
}

template <typename S>
LossBreakdown composite_loss(const Mat<S>& pixels, const Mat<S>& pressure_hat, double alpha,
                             double beta, Mat<S>* grad_pressure) {
  check_loss_shapes(pixels, pressure_hat);
  const auto rows = static_cast<double>(pixels.rows());

  LossBreakdown out;
  out.mse = (pixels - pressure_hat).template cast<double>().rowwise().squaredNorm().mean();

  if (grad_pressure != nullptr) {
    *grad_pressure =
        (pressure_hat - pixels) * static_cast<S>(2.0 * alpha / rows);
  }

  const S eps = static_cast<S>(kSadEpsilon);
  double sad_sum = 0.0;
  for (Index i = 0; i < pixels.rows(); ++i) {
    const auto p = pixels.row(i);
    const auto ph = pressure_hat.row(i);
    const S np = p.norm();
    const S nh = ph.norm();
    const S dot = p.dot(ph);
    const S denom = np * nh + eps;
    const S cosine = std::clamp(dot / denom, S(-1), S(1));
    sad_sum += (2.0 / std::numbers::pi) * std::acos(static_cast<double>(cosine));

    if (grad_pressure == nullptr || beta == 0.0) continue;
    // Clamp only the arccos slope so aligned rows cannot blow up; generic
    // rows are far from the clamp and keep the exact derivative.
    const S safe = std::clamp(cosine, S(-1) + S(1e-12), S(1) - S(1e-12));
    const S factor = static_cast<S>(-(2.0 / std::numbers::pi) * beta / rows) /
                     std::sqrt(S(1) - safe * safe);
    RowVec<S> dcos = p / denom;
    if (nh > S(0)) dcos -= ph * (dot * np / (nh * denom * denom));
    grad_pressure->row(i) += factor * dcos;
  }
  out.msad = sad_sum / rows;
  out.total = alpha * out.mse + beta * out.msad;
  return out;
}

LossBreakdown loss(const PixelBatch& batch, const Matd& pressure_hat, const TrainConfig& config) {
  return composite_loss<double>(batch.pixels, pressure_hat, config.alpha, config.beta);
}

template <typename S>
ModelGrads<S> backward_pass(const ModelParams<S>& model, const Vec<S>& depths,
                            const ForwardCache<S>& cache, const Mat<S>& grad_pressure) {
  const DecodeCache<S>& d = cache.dec;
  ModelGrads<S> grads;

  // pressure = gamma_phi0 .* ((psi + 1) .* mu_a_hat)
  const Mat<S> one_plus_psi = (d.psi.array() + S(1)).matrix();
  grads.gamma_phi0 = (grad_pressure.array() * one_plus_psi.array() * d.mu_a_hat.array())
                         .colwise()
                         .sum()
                         .matrix();
  const Mat<S> g_scaled =
      (grad_pressure.array().rowwise() * model.gamma_phi0.array()).matrix();
  const Mat<S> grad_psi = (g_scaled.array() * d.mu_a_hat.array()).matrix();
  Mat<S> grad_mu_a_hat = (g_scaled.array() * one_plus_psi.array()).matrix();

  // psi = expm1(-m_eff rho): dpsi/dm = -rho (psi + 1)
  const Mat<S> grad_m =
      (-((grad_psi.array() * one_plus_psi.array()).colwise() * depths.array())).matrix();

  // m = sqrt(3 a (a + s)): dm/da = 3(2a + s)/(2m), dm/ds = 3a/(2m)
  const Mat<S> inv2m = half_inverse(d.m_eff);
  grad_mu_a_hat.array() += grad_m.array() * S(3) *
                           (S(2) * d.mu_a_hat.array() + cache.mu_s_prime.array()) *
                           inv2m.array();
  const Mat<S> grad_mu_s =
      (grad_m.array() * S(3) * d.mu_a_hat.array() * inv2m.array()).matrix();

  // mu_a_hat = relu(conc E^T); the pseudoinverse below is a constant
  const Mat<S> spectra = model.spectra.values.template cast<S>();
  const Mat<S> pinv = model.spectra.pinv.template cast<S>();
  const Mat<S> g_pre = (grad_mu_a_hat.array() * step_mask(d.mu_a_hat_pre).array()).matrix();
  Mat<S> grad_conc = g_pre * spectra;
  if (model.adjust_spectra) grads.spectra = g_pre.transpose() * d.conc;

  // conc = relu(mu_a E+^T)
  const Mat<S> h_pre = (grad_conc.array() * step_mask(d.conc_pre).array()).matrix();
  const Mat<S> grad_mu_a = h_pre * pinv;

  encoder_backward(model.mua_net, cache.mua, grad_mu_a, grads.mua_net);
  encoder_backward(model.mus_net, cache.mus, grad_mu_s, grads.mus_net);
  return grads;
}

template <typename S>
void Optimizer<S>::step(ModelParams<S>& model, const ModelGrads<S>& grads) {
  std::size_t idx = 0;
  auto next = [&]() -> nn::AdamState<S>& {
    if (idx == states_.size()) {
      states_.emplace_back();
      states_.back().learning_rate = static_cast<S>(learning_rate_);
    }
    return states_[idx++];
  };
  auto step_net = [&](FcnnParams<S>& net, const FcnnGrads<S>& g) {
    for (std::size_t j = 0; j < net.hidden.size(); ++j) {
      nn::adam_step(net.hidden[j].weights, g.hidden[j].weights, next());
      nn::adam_step(net.hidden[j].bias, g.hidden[j].bias, next());
      nn::adam_step(net.norms[j].gamma, g.norms[j].gamma, next());
      nn::adam_step(net.norms[j].beta, g.norms[j].beta, next());
    }
    nn::adam_step(net.head.weights, g.head.weights, next());
    nn::adam_step(net.head.bias, g.head.bias, next());
  };

  step_net(model.mua_net, grads.mua_net);
  step_net(model.mus_net, grads.mus_net);

  nn::adam_step(model.gamma_phi0, grads.gamma_phi0, next());
  model.gamma_phi0 = model.gamma_phi0.cwiseMax(S(0));

  nn::AdamState<S>& spectra_state = next();
  if (model.adjust_spectra) {
    Mat<S> values = model.spectra.values.template cast<S>();
    nn::adam_step(values, grads.spectra, spectra_state);
    values = values.cwiseMax(S(0));
    model.spectra = compute_pinv(model.spectra.with_values(values.template cast<double>()));
  }
  ++step_count_;
}

template <typename S>
TrainResult train(ModelParams<S>& model, const PixelBatch& data, const TrainConfig& config) {
  check_train_config(config);
  data.validate();
  if (data.wavelength_count() != model.wavelength_count()) {
    throw DimensionMismatch("train: dataset and model wavelength counts differ");
  }
  if (model.adjust_spectra != config.adjust_spectra) {
    throw ConfigError("train: model and config disagree on adjust_spectra");
  }
  if (model.spectra.pinv_stale) model.spectra = compute_pinv(std::move(model.spectra));

  const auto total = static_cast<std::size_t>(data.pixel_count());
  if (total < 2) throw BatchTooSmall("train: need at least 2 pixels");

  Rng rng(config.seed);
  TrainResult result;
  if (config.eval_fraction > 0.0) {
    auto eval_count = static_cast<std::size_t>(
        std::llround(config.eval_fraction * static_cast<double>(total)));
    eval_count = std::min(eval_count, total - 2);
    const auto perm = rng.derive("split").permutation(total);
    result.eval_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(eval_count));
    result.train_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(eval_count), perm.end());
    std::sort(result.eval_rows.begin(), result.eval_rows.end());
    std::sort(result.train_rows.begin(), result.train_rows.end());
  } else {
    result.train_rows.resize(total);
    for (std::size_t i = 0; i < total; ++i) result.train_rows[i] = i;
  }

  Rng shuffle_rng = rng.derive("shuffle");
  Optimizer<S> optimizer(config.learning_rate);
  const auto train_count = result.train_rows.size();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto perm = shuffle_rng.permutation(train_count);

    double mse_sum = 0.0, msad_sum = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < train_count;
         start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t count =
          std::min(static_cast<std::size_t>(config.batch_size), train_count - start);
      if (count < 2) continue;  // batch norm cannot use a stray single row

      std::vector<std::size_t> rows(count);
      for (std::size_t k = 0; k < count; ++k) rows[k] = result.train_rows[perm[start + k]];
      const PixelBatch sub = data.select(rows);
      const Mat<S> x = sub.pixels.template cast<S>();
      const Vec<S> rho = sub.depths.template cast<S>();

      ForwardCache<S> cache;
      forward_pass(model, x, rho, nn::Mode::train, cache);
      Mat<S> grad_pressure;
      const LossBreakdown lb =
          composite_loss(x, cache.dec.pressure_hat, config.alpha, config.beta, &grad_pressure);
      if (!std::isfinite(lb.total)) {
        throw NonFiniteLoss("epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_index) + ": loss is not finite (mse=" +
                            std::to_string(lb.mse) + ", msad=" + std::to_string(lb.msad) + ")");
      }
      const ModelGrads<S> grads = backward_pass(model, rho, cache, grad_pressure);
      optimizer.step(model, grads);

      mse_sum += lb.mse * static_cast<double>(count);
      msad_sum += lb.msad * static_cast<double>(count);
      seen += count;
    }

    const std::chrono::duration<double, std::milli> elapsed =
        std::chrono::steady_clock::now() - t0;
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_mse = mse_sum / static_cast<double>(seen);
    stats.train_msad = msad_sum / static_cast<double>(seen);
    stats.loss = config.alpha * stats.train_mse + config.beta * stats.train_msad;
    stats.wall_ms = elapsed.count();
    result.history.push_back(stats);
  }
  return result;
}

template <typename S>
UnmixResult infer(const ModelParams<S>& model, const PixelBatch& batch) {
  batch.validate();
  // Eval mode reads batch-norm running statistics without touching them, so
  // the cast below performs no writes.
  auto& mutable_model = const_cast<ModelParams<S>&>(model);
  const OpticalFieldsT<S> fields = encode(mutable_model, batch, nn::Mode::eval);
  const Vec<S> rho = batch.depths.template cast<S>();
  const DecodeResult<S> dec = decode(model, fields, rho);

  UnmixResult out;
  out.conc = dec.conc.template cast<double>();
  out.mu_a = fields.mu_a.template cast<double>();
  out.mu_s_prime = fields.mu_s_prime.template cast<double>();
  out.mu_a_hat = dec.mu_a_hat.template cast<double>();
  out.pressure_hat = dec.pressure_hat.template cast<double>();
  out.so2 = so2(out.conc);
  return out;
}

template ModelParams<float> init_model<float>(const SpectraMatrix&, const ModelConfig&, bool,
                                              std::uint64_t);
template ModelParams<double> init_model<double>(const SpectraMatrix&, const ModelConfig&, bool,
                                                std::uint64_t);
template OpticalFieldsT<float> encode<float>(ModelParams<float>&, const PixelBatch&, nn::Mode);
template OpticalFieldsT<double> encode<double>(ModelParams<double>&, const PixelBatch&, nn::Mode);
template DecodeResult<float> decode<float>(const ModelParams<float>&, const OpticalFieldsT<float>&,
                                           const Vec<float>&, DecodeCache<float>*);
template DecodeResult<double> decode<double>(const ModelParams<double>&,
                                             const OpticalFieldsT<double>&, const Vec<double>&,
                                             DecodeCache<double>*);
template void forward_pass<float>(ModelParams<float>&, const Mat<float>&, const Vec<float>&,
                                  nn::Mode, ForwardCache<float>&);
template void forward_pass<double>(ModelParams<double>&, const Mat<double>&, const Vec<double>&,
                                   nn::Mode, ForwardCache<double>&);
template LossBreakdown composite_loss<float>(const Mat<float>&, const Mat<float>&, double, double,
                                             Mat<float>*);
template LossBreakdown composite_loss<double>(const Mat<double>&, const Mat<double>&, double,
                                              double, Mat<double>*);
template ModelGrads<float> backward_pass<float>(const ModelParams<float>&, const Vec<float>&,
                                                const ForwardCache<float>&, const Mat<float>&);
template ModelGrads<double> backward_pass<double>(const ModelParams<double>&, const Vec<double>&,
                                                  const ForwardCache<double>&, const Mat<double>&);
template class Optimizer<float>;
template class Optimizer<double>;
template TrainResult train<float>(ModelParams<float>&, const PixelBatch&, const TrainConfig&);
template TrainResult train<double>(ModelParams<double>&, const PixelBatch&, const TrainConfig&);
template UnmixResult infer<float>(const ModelParams<float>&, const PixelBatch&);
template UnmixResult infer<double>(const ModelParams<double>&, const PixelBatch&);

}  // namespace spoi
