#pragma once

#include <algorithm>
#include <span>

#include "dydec/types.hpp"

namespace dydec {

namespace detail {
// Output block length for the tap-outer accumulation loop; keeps the block in L1.
inline constexpr Eigen::Index kConvBlock = 1024;
}  // namespace detail

/// Zero-padded, centered correlation: out[n] = sum_j k[j] * x[n + j - c], c = (L-1)/2.
///
/// Each output accumulates its taps in ascending j order, so results are
/// bit-reproducible regardless of blocking or threading.
template <typename Scalar>
void conv_same(std::span<const Scalar> signal, std::span<const Scalar> kernel,
               std::span<Scalar> out) {
  const auto n = static_cast<Eigen::Index>(signal.size());
  const auto len = static_cast<Eigen::Index>(kernel.size());
  if (len % 2 == 0) throw Error("conv_same: kernel length must be odd");
  if (static_cast<Eigen::Index>(out.size()) != n) throw Error("conv_same: output length mismatch");
  const Eigen::Index c = (len - 1) / 2;

  for (Eigen::Index b0 = 0; b0 < n; b0 += detail::kConvBlock) {
    const Eigen::Index b1 = std::min(n, b0 + detail::kConvBlock);
    Scalar* o = out.data();
    for (Eigen::Index i = b0; i < b1; ++i) o[i] = Scalar(0);
    for (Eigen::Index j = 0; j < len; ++j) {
      const Scalar kj = kernel[static_cast<std::size_t>(j)];
      const Eigen::Index shift = j - c;
      // valid i: 0 <= i + shift < n
      const Eigen::Index lo = std::max(b0, -shift);
      const Eigen::Index hi = std::min(b1, n - shift);
      const Scalar* x = signal.data();
      for (Eigen::Index i = lo; i < hi; ++i) o[i] += kj * x[i + shift];
    }
  }
}

template <typename Scalar>
VectorX<Scalar> conv_same(const VectorX<Scalar>& signal, const VectorX<Scalar>& kernel) {
  VectorX<Scalar> out(signal.size());
  conv_same<Scalar>(std::span<const Scalar>(signal.data(), signal.size()),
                    std::span<const Scalar>(kernel.data(), kernel.size()),
                    std::span<Scalar>(out.data(), out.size()));
  return out;
}

/// Gradient of conv_same w.r.t. its input: correlation of the upstream
/// gradient with the reversed kernel.
void conv_same_grad_input(std::span<const double> grad_out, std::span<const double> kernel,
                          std::span<double> grad_in);

/// Gradient of conv_same w.r.t. its kernel: grad_k[j] = sum_n g[n] * x[n + j - c].
void conv_same_grad_kernel(std::span<const double> grad_out, std::span<const double> signal,
                           std::span<double> grad_kernel);

/// Strided variant: out[m] = sum_j k[j] * x[m*stride + j - c]; out has size n / stride.
template <typename Scalar>
void conv_strided(std::span<const Scalar> signal, std::span<const Scalar> kernel, int stride,
                  std::span<Scalar> out) {
  const auto n = static_cast<Eigen::Index>(signal.size());
  const auto len = static_cast<Eigen::Index>(kernel.size());
  if (len % 2 == 0) throw Error("conv_strided: kernel length must be odd");
  if (stride < 1 || n % stride != 0) throw Error("conv_strided: length not divisible by stride");
  if (static_cast<Eigen::Index>(out.size()) != n / stride)
    throw Error("conv_strided: output length mismatch");
  const Eigen::Index c = (len - 1) / 2;
  for (Eigen::Index m = 0; m < n / stride; ++m) {
    const Eigen::Index center = m * stride;
    const Eigen::Index j0 = std::max<Eigen::Index>(0, c - center);
    const Eigen::Index j1 = std::min<Eigen::Index>(len, n - center + c);
    Scalar acc(0);
    for (Eigen::Index j = j0; j < j1; ++j)
      acc += kernel[static_cast<std::size_t>(j)] * signal[static_cast<std::size_t>(center + j - c)];
    out[static_cast<std::size_t>(m)] = acc;
  }
}

/// Keeps every `factor`-th sample starting at index 0.
template <typename Scalar>
VectorX<Scalar> decimate(const VectorX<Scalar>& x, int factor = 2) {
  if (factor < 1 || x.size() % factor != 0) throw Error("decimate: length not divisible by factor");
  VectorX<Scalar> out(x.size() / factor);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = x[i * factor];
  return out;
}

}  // namespace dydec
