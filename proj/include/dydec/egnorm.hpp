#pragma once

#include <algorithm>
#include <cmath>

#include "dydec/types.hpp"

namespace dydec {

inline constexpr double kEgNormFloor = 1e-3;
inline constexpr double kEnvelopeEpsilon = 1e-6;
inline constexpr double kRatioClamp = 1e6;
inline constexpr int kGaussianRadiusCap = 64;

/// Learnable energy-gain normalization parameters.
struct EgNormParams {
  double sigma = 0.5;  ///< Gaussian width, samples at the node's local rate
  double alpha = 0.96;
  double delta = 2.0;
  double gamma = 0.5;
};

/// Floors sigma, delta, gamma at kEgNormFloor.
EgNormParams clamp_egnorm(EgNormParams p);

/// min(ceil(4 sigma), 64)
int gaussian_radius(double sigma);

/// Normalized Gaussian taps g[-R..R] (size 2R+1, sums to 1), evaluated in Scalar.
template <typename Scalar = double>
VectorX<Scalar> gaussian_taps(double sigma) {
  if (!(sigma > 0.0)) throw Error("gaussian_taps: sigma must be positive");
  const int r = gaussian_radius(sigma);
  const Scalar s = static_cast<Scalar>(sigma);
  VectorX<Scalar> e(2 * r + 1);
  for (int t = -r; t <= r; ++t) e[t + r] = std::exp(-static_cast<Scalar>(t * t) / (Scalar(2) * s * s));
  return e / e.sum();
}
/// d g / d sigma for the normalized taps.
Vector gaussian_taps_dsigma(double sigma);

/// Mirror index without edge repetition: -1 -> 1, n -> n-2.
inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// W[n] = sum_t g[t] |x[n - t]| + eps, reflected boundaries.
template <typename Scalar>
VectorX<Scalar> gaussian_smooth(const VectorX<Scalar>& signal, double sigma) {
  const VectorX<Scalar> g = gaussian_taps<Scalar>(sigma);
  const auto r = static_cast<Eigen::Index>((g.size() - 1) / 2);
  const Eigen::Index n = signal.size();
  VectorX<Scalar> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar acc(0);
    for (Eigen::Index t = -r; t <= r; ++t) acc += g[t + r] * std::abs(signal[reflect_index(i - t, n)]);
    out[i] = acc + static_cast<Scalar>(kEnvelopeEpsilon);
  }
  return out;
}

namespace detail {
template <typename Scalar>
Scalar signed_pow(Scalar x, Scalar p) {
  return x < Scalar(0) ? -std::pow(-x, p) : std::pow(x, p);
}
}  // namespace detail

/// out[n] = s(x[n] / W[n]^alpha + delta) - delta^gamma with s(b) = sign(b) |b|^gamma.
template <typename Scalar>
VectorX<Scalar> eg_normalize(const VectorX<Scalar>& signal, const EgNormParams& p) {
  const VectorX<Scalar> w = gaussian_smooth(signal, p.sigma);
  const auto alpha = static_cast<Scalar>(p.alpha);
  const auto delta = static_cast<Scalar>(p.delta);
  const auto gamma = static_cast<Scalar>(p.gamma);
  const Scalar offset = std::pow(delta, gamma);
  const auto clamp = static_cast<Scalar>(kRatioClamp);
  VectorX<Scalar> out(signal.size());
  for (Eigen::Index i = 0; i < signal.size(); ++i) {
    const Scalar ratio = std::clamp(signal[i] / std::pow(w[i], alpha), -clamp, clamp);
    out[i] = detail::signed_pow(ratio + delta, gamma) - offset;
  }
  return out;
}

/// Vector-Jacobian product of eg_normalize at (signal, p).
struct EgNormGrad {
  Vector input;
  EgNormParams params{0.0, 0.0, 0.0, 0.0};
};
EgNormGrad eg_normalize_vjp(const Vector& signal, const EgNormParams& p, const Vector& grad_out);

}  // namespace dydec
