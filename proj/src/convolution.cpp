#include "dydec/convolution.hpp"

#include <vector>

namespace dydec {

void conv_same_grad_input(std::span<const double> grad_out, std::span<const double> kernel,
                          std::span<double> grad_in) {
  std::vector<double> flipped(kernel.rbegin(), kernel.rend());
  conv_same<double>(grad_out, flipped, grad_in);
}

void conv_same_grad_kernel(std::span<const double> grad_out, std::span<const double> signal,
                           std::span<double> grad_kernel) {
  const auto n = static_cast<Eigen::Index>(signal.size());
  const auto len = static_cast<Eigen::Index>(grad_kernel.size());
  if (len % 2 == 0) throw Error("conv_same_grad_kernel: kernel length must be odd");
  if (static_cast<Eigen::Index>(grad_out.size()) != n)
    throw Error("conv_same_grad_kernel: length mismatch");
  const Eigen::Index c = (len - 1) / 2;
  Eigen::Map<const Vector> g(grad_out.data(), n);
  Eigen::Map<const Vector> x(signal.data(), n);
  for (Eigen::Index j = 0; j < len; ++j) {
    const Eigen::Index shift = j - c;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(n, n - shift);
    grad_kernel[static_cast<std::size_t>(j)] =
        hi > lo ? g.segment(lo, hi - lo).dot(x.segment(lo + shift, hi - lo)) : 0.0;
  }
}

}  // namespace dydec
