#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <vector>

#include "dydec/egnorm.hpp"
#include "dydec/types.hpp"

namespace dydec {

inline constexpr double kBandEpsilonHz = 1.0;

/// One learnable band-pass node.
///
/// Cutoffs are physical frequencies in Hz. `sample_rate` is the rate of the
/// (possibly decimated) signal the kernel is convolved with; cutoffs above
/// sample_rate/2 are legal and land on their aliased image when the kernel
/// is sampled at integer taps.
struct SincBandPass {
  double f_low = 0.0;
  double f_high = 0.0;
  int kernel_len = 1025;
  double sample_rate = 24000.0;
  double max_freq = 12000.0;  ///< clamp ceiling (Nyquist of the undecimated input)
};

/// Running statistics for the batch-standardization ablation.
struct BatchNormStats {
  double mean = 0.0;
  double var = 1.0;
};

struct TreeNode {
  SincBandPass filter;
  EgNormParams egnorm;
  BatchNormStats bn;
};

enum class Taper : std::uint8_t { none = 0, hamming = 1 };

/// Complete binary tree of band-pass nodes. levels[d-1] holds the 2^d nodes of depth d.
struct DyadicTree {
  int depth = 0;
  double base_sample_rate = 24000.0;
  double band_top = 12000.0;
  std::vector<int> downsample_depths;
  Taper taper = Taper::hamming;
  std::vector<std::vector<TreeNode>> levels;

  [[nodiscard]] const TreeNode& node(int d, int i) const { return levels.at(d - 1).at(i); }
  [[nodiscard]] TreeNode& node(int d, int i) { return levels.at(d - 1).at(i); }
  [[nodiscard]] bool decimates_after(int d) const;
  /// Number of decimation stages strictly before depth d.
  [[nodiscard]] int decimations_before(int d) const;
  [[nodiscard]] int total_decimation() const;  ///< 2^{|downsample_depths|}
  [[nodiscard]] std::size_t node_count() const;
  [[nodiscard]] int leaf_count() const { return 1 << depth; }
};

DyadicTree init_dyadic_tree(int depth, double band_top, int kernel_len, double base_sample_rate,
                            std::vector<int> downsample_depths = {1, 2, 3, 4, 5});

/// Repairs trained cutoffs so that 0 <= f_low < f_high <= max_freq.
SincBandPass clamp_cutoffs(SincBandPass filter);

/// Symmetric taper of odd length; centre value is exactly 1.
Vector taper_window(int len, Taper taper);

namespace detail {
// sin(2*pi*f*t)/(pi*t), i.e. 2f*sinc(2*pi*f*t) with the t=0 limit 2f.
template <typename Scalar = double>
Scalar lowpass_tap(Scalar f_norm, Scalar t) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  if (t == Scalar(0)) return Scalar(2) * f_norm;
  return std::sin(Scalar(2) * pi * f_norm * t) / (pi * t);
}
// d/df of lowpass_tap.
inline double lowpass_tap_dfreq(double f_norm, double t) {
  return 2.0 * std::cos(2.0 * std::numbers::pi * f_norm * t);
}
}  // namespace detail

/// Samples the windowed band-pass kernel
///   k[c+t] = w[t] * (2 fh sinc(2 pi fh t) - 2 fl sinc(2 pi fl t)),   f = cutoff / sample_rate.
template <typename Scalar = double>
VectorX<Scalar> materialize_kernel(const SincBandPass& filter, Taper taper = Taper::hamming) {
  const int len = filter.kernel_len;
  if (len < 1 || len % 2 == 0) throw Error("materialize_kernel: kernel_len must be odd");
  const Vector w = taper_window(len, taper);
  const Scalar rate = static_cast<Scalar>(filter.sample_rate);
  const Scalar fh = static_cast<Scalar>(filter.f_high) / rate;
  const Scalar fl = static_cast<Scalar>(filter.f_low) / rate;
  const int c = (len - 1) / 2;
  VectorX<Scalar> k(len);
  for (int j = 0; j < len; ++j) {
    const auto t = static_cast<Scalar>(j - c);
    k[j] = static_cast<Scalar>(w[j]) * (detail::lowpass_tap(fh, t) - detail::lowpass_tap(fl, t));
  }
  return k;
}

/// Partial derivatives of every kernel tap with respect to the Hz cutoffs (taper held fixed).
struct KernelJacobian {
  Vector d_low;
  Vector d_high;
};
KernelJacobian kernel_cutoff_jacobian(const SincBandPass& filter, Taper taper = Taper::hamming);

/// Windowed low-pass 2 f sinc(2 pi f t) used by the per-channel pooling stages.
template <typename Scalar = double>
VectorX<Scalar> lowpass_kernel(double cutoff_hz, double sample_rate, int len, Taper taper = Taper::hamming) {
  if (len < 1 || len % 2 == 0) throw Error("lowpass_kernel: length must be odd");
  const Vector w = taper_window(len, taper);
  const Scalar f = static_cast<Scalar>(cutoff_hz) / static_cast<Scalar>(sample_rate);
  const int c = (len - 1) / 2;
  VectorX<Scalar> k(len);
  for (int j = 0; j < len; ++j) k[j] = static_cast<Scalar>(w[j]) * detail::lowpass_tap(f, static_cast<Scalar>(j - c));
  return k;
}
Vector lowpass_kernel_dcutoff(double cutoff_hz, double sample_rate, int len,
                              Taper taper = Taper::hamming);

/// Span of base-rate input samples that can influence one output sample of a depth-d node.
std::int64_t receptive_field(const DyadicTree& tree, int d);

/// Tree record: versioned little-endian binary.
void write_tree(std::ostream& os, const DyadicTree& tree);
DyadicTree read_tree(std::istream& is);

}  // namespace dydec
