#include "dydec/egnorm.hpp"

#include <cmath>

namespace dydec {

EgNormParams clamp_egnorm(EgNormParams p) {
  p.sigma = std::max(p.sigma, kEgNormFloor);
  p.delta = std::max(p.delta, kEgNormFloor);
  p.gamma = std::max(p.gamma, kEgNormFloor);
  return p;
}

int gaussian_radius(double sigma) {
  return std::min(static_cast<int>(std::ceil(4.0 * sigma)), kGaussianRadiusCap);
}

Vector gaussian_taps_dsigma(double sigma) {
  if (!(sigma > 0.0)) throw Error("gaussian_taps_dsigma: sigma must be positive");
  const int r = gaussian_radius(sigma);
  Vector e(2 * r + 1);
  Vector de(2 * r + 1);
  for (int t = -r; t <= r; ++t) {
    e[t + r] = std::exp(-(t * t) / (2.0 * sigma * sigma));
    de[t + r] = e[t + r] * (t * t) / (sigma * sigma * sigma);
  }
  const double s = e.sum();
  const double ds = de.sum();
  return (de * s - e * ds) / (s * s);
}

EgNormGrad eg_normalize_vjp(const Vector& signal, const EgNormParams& p, const Vector& grad_out) {
  const Eigen::Index n = signal.size();
  if (grad_out.size() != n) throw Error("eg_normalize_vjp: gradient length mismatch");

  const Vector g = gaussian_taps<double>(p.sigma);
  const Vector dg = gaussian_taps_dsigma(p.sigma);
  const auto r = static_cast<Eigen::Index>((g.size() - 1) / 2);
  const Vector w = gaussian_smooth(signal, p.sigma);

  EgNormGrad res;
  res.input = Vector::Zero(n);
  Vector grad_w(n);
  const double delta_pow = std::pow(p.delta, p.gamma);
  const double ddelta_offset = p.gamma * std::pow(p.delta, p.gamma - 1.0);
  const double log_delta = std::log(p.delta);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double pw = std::pow(w[i], p.alpha);
    const double raw = signal[i] / pw;
    const bool clamped = std::abs(raw) > kRatioClamp;
    const double ratio = std::clamp(raw, -kRatioClamp, kRatioClamp);
    const double b = ratio + p.delta;
    const double ab = std::abs(b);
    const double go = grad_out[i];

    const double dout_db = ab > 0.0 ? p.gamma * std::pow(ab, p.gamma - 1.0) : 0.0;
    const double gb = go * dout_db;
    res.params.delta += gb - go * ddelta_offset;
    const double sb_log = ab > 0.0 ? detail::signed_pow(b, p.gamma) * std::log(ab) : 0.0;
    res.params.gamma += go * (sb_log - delta_pow * log_delta);

    const double gr = clamped ? 0.0 : gb;
    res.input[i] += gr / pw;
    grad_w[i] = gr * (-p.alpha * ratio / w[i]);
    res.params.alpha += gr * (-ratio * std::log(w[i]));
  }

  // Back through W[i] = sum_t g[t] |x[refl(i - t)]| + eps.
  Vector grad_abs = Vector::Zero(n);
  double gsigma = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double gw = grad_w[i];
    double dsig = 0.0;
    for (Eigen::Index t = -r; t <= r; ++t) {
      const Eigen::Index m = reflect_index(i - t, n);
      grad_abs[m] += gw * g[t + r];
      dsig += dg[t + r] * std::abs(signal[m]);
    }
    gsigma += gw * dsig;
  }
  res.params.sigma = gsigma;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = signal[i] > 0.0 ? 1.0 : (signal[i] < 0.0 ? -1.0 : 0.0);
    res.input[i] += grad_abs[i] * s;
  }
  return res;
}

}  // namespace dydec
