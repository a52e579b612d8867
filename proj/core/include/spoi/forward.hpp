#pragma once

#include <cmath>
#include <sstream>
#include <utility>

#include "spoi/errors.hpp"
#include "spoi/types.hpp"

namespace spoi {

/// Per-pixel absorption and reduced scattering coefficients, I x L, mm^-1.
template <typename Scalar>
struct OpticalFieldsT {
  Mat<Scalar> mu_a;
  Mat<Scalar> mu_s_prime;
};

/// Combined Grueneisen x surface-fluence row vector (1 x L) and per-pixel
/// depths rho (mm). The two factors are not separable from pixel data, so
/// only their product is carried.
template <typename Scalar>
struct FluenceParamsT {
  RowVec<Scalar> gamma_phi0;
  Vec<Scalar> depths;
};

using OpticalFields = OpticalFieldsT<double>;
using FluenceParams = FluenceParamsT<double>;

namespace detail {

template <typename Scalar>
void check_forward_shapes(const OpticalFieldsT<Scalar>& fields,
                          const FluenceParamsT<Scalar>* params) {
  if (fields.mu_a.rows() != fields.mu_s_prime.rows() ||
      fields.mu_a.cols() != fields.mu_s_prime.cols()) {
    std::ostringstream msg;
    msg << "mu_a is " << fields.mu_a.rows() << "x" << fields.mu_a.cols() << ", mu_s' is "
        << fields.mu_s_prime.rows() << "x" << fields.mu_s_prime.cols();
    throw DimensionMismatch(msg.str());
  }
  if (params != nullptr) {
    if (params->gamma_phi0.cols() != fields.mu_a.cols()) {
      throw DimensionMismatch("gamma_phi0 length does not match wavelength count");
    }
    if (params->depths.size() != fields.mu_a.rows()) {
      throw DimensionMismatch("depths length does not match pixel count");
    }
  }
}

}  // namespace detail

/// Effective attenuation sqrt(3 mu_a (mu_a + mu_s')), elementwise, I x L.
template <typename Scalar>
Mat<Scalar> effective_attenuation(const OpticalFieldsT<Scalar>& fields) {
  detail::check_forward_shapes<Scalar>(fields, nullptr);
  return (Scalar(3) * fields.mu_a.array() * (fields.mu_a.array() + fields.mu_s_prime.array()))
      .sqrt()
      .matrix();
}

/// Diffusion-approximation fluence gamma_phi0_l * exp(-mu_eff_il * rho_i).
template <typename Scalar>
Mat<Scalar> fluence(const OpticalFieldsT<Scalar>& fields, const FluenceParamsT<Scalar>& params) {
  detail::check_forward_shapes(fields, &params);
  const Mat<Scalar> mu_eff = effective_attenuation(fields);
  Mat<Scalar> phi =
      (-(mu_eff.array().colwise() * params.depths.array())).exp().matrix();
  phi.array().rowwise() *= params.gamma_phi0.array();
  return phi;
}

/// Initial pressure p = fluence * mu_a, the direct forward evaluation.
template <typename Scalar>
Mat<Scalar> forward_pressure(const OpticalFieldsT<Scalar>& fields,
                             const FluenceParamsT<Scalar>& params) {
  return (fluence(fields, params).array() * fields.mu_a.array()).matrix();
}

template <typename Scalar>
struct DecomposedPressure {
  /// Nonlinear multiplier exp(-mu_eff * rho) - 1, entries in (-1, 0].
  Mat<Scalar> nonlinear_multiplier;
  Mat<Scalar> pressure;
};

/// Splits the forward model into a linear term and a nonlinear multiplier:
/// p = gamma_phi0 * (psi * mu_a + mu_a) with psi = exp(-mu_eff * rho) - 1.
/// Algebraically identical to forward_pressure; computed via expm1 so the
/// two routes stay independent implementations.
template <typename Scalar>
DecomposedPressure<Scalar> forward_decomposed(const OpticalFieldsT<Scalar>& fields,
                                              const FluenceParamsT<Scalar>& params) {
  detail::check_forward_shapes(fields, &params);
  const Mat<Scalar> mu_eff = effective_attenuation(fields);
  DecomposedPressure<Scalar> out;
  out.nonlinear_multiplier =
      (-(mu_eff.array().colwise() * params.depths.array()))
          .unaryExpr([](Scalar x) { return static_cast<Scalar>(std::expm1(x)); })
          .matrix();
  Mat<Scalar> p =
      (out.nonlinear_multiplier.array() * fields.mu_a.array() + fields.mu_a.array()).matrix();
  p.array().rowwise() *= params.gamma_phi0.array();
  out.pressure = std::move(p);
  return out;
}

}  // namespace spoi
