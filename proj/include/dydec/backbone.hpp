#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dydec/filterbank.hpp"
#include "dydec/frontend.hpp"
#include "dydec/types.hpp"

namespace dydec {

/// One backbone stage: optional per-channel strided low-pass, then a cross-channel conv + ReLU.
struct BackboneStage {
  int stride = 1;  ///< 1 disables the pooling filter
  int out_channels = 0;
};

struct BackboneConfig {
  std::vector<BackboneStage> stages{{5, 512}, {5, 1024}, {3, 512}, {1, 256}};
  int lowpass_len = 63;
  int conv_width = 3;
  /// Initial output bias; unset draws it like the other biases.
  std::optional<double> out_bias_init;

  [[nodiscard]] int stride_product() const;
};

struct BackboneLayer {
  int stride = 1;
  double input_rate = 0.0;  ///< frame rate entering the pooling filter
  Vector lowpass_cutoff;    ///< Hz, one per input channel; empty when stride == 1
  std::vector<Matrix> weights;  ///< conv_width taps, each [out x in]
  Vector bias;
};

struct BackboneParams {
  int lowpass_len = 63;
  std::vector<BackboneLayer> layers;
  Vector out_weight;
  double out_bias = 0.0;
};

/// Fan-in scaled uniform init; per-channel cutoffs at a quarter of the local Nyquist.
BackboneParams init_backbone(const BackboneConfig& config, int in_channels, double frame_rate,
                             std::uint64_t seed);

template <typename Scalar>
Scalar softplus(Scalar z) {
  return z > Scalar(30) ? z : std::log1p(std::exp(z));
}
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Per-channel strided low-pass pooling: row c of the output is conv_strided(row c, lowpass_c).
template <typename Scalar>
MatrixRX<Scalar> channel_pool(const MatrixRX<Scalar>& x, const BackboneLayer& layer, int lowpass_len) {
  if (layer.stride == 1) return x;
  if (x.rows() != layer.lowpass_cutoff.size()) throw Error("channel_pool: channel count mismatch");
  if (x.cols() % layer.stride != 0) throw Error("channel_pool: frames not divisible by stride");
  MatrixRX<Scalar> out(x.rows(), x.cols() / layer.stride);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    const VectorX<Scalar> k = lowpass_kernel<Scalar>(layer.lowpass_cutoff[c], layer.input_rate, lowpass_len);
    conv_strided<Scalar>(std::span<const Scalar>(x.row(c).data(), x.cols()),
                         std::span<const Scalar>(k.data(), k.size()), layer.stride,
                         std::span<Scalar>(out.row(c).data(), out.cols()));
  }
  return out;
}

/// out[:, t] = bias + sum_k W_k x[:, t + k - c]; zero padding. No activation.
template <typename Scalar>
MatrixRX<Scalar> cross_channel_conv(const MatrixRX<Scalar>& x, const std::vector<Matrix>& weights, const Vector& bias) {
  const auto width = static_cast<Eigen::Index>(weights.size());
  const Eigen::Index c = (width - 1) / 2;
  const Eigen::Index t = x.cols();
  if (weights.front().cols() != x.rows()) throw Error("cross_channel_conv: channel count mismatch");
  MatrixRX<Scalar> out = bias.cast<Scalar>().replicate(1, t);
  for (Eigen::Index k = 0; k < width; ++k) {
    const Eigen::Index shift = k - c;  // out[:, i] += W_k x[:, i + shift]
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
    if (hi <= lo) continue;
    out.middleCols(lo, hi - lo).noalias() += weights[k].cast<Scalar>() * x.middleCols(lo + shift, hi - lo);
  }
  return out;
}

/// Frame scores (nonnegative, one per output frame).
template <typename Scalar>
VectorX<Scalar> backbone_forward(const MatrixRX<Scalar>& tf, const BackboneParams& params) {
  MatrixRX<Scalar> h = tf;
  for (const auto& layer : params.layers) {
    h = channel_pool(h, layer, params.lowpass_len);
    h = cross_channel_conv(h, layer.weights, layer.bias).cwiseMax(Scalar(0));
  }
  VectorX<Scalar> z = (params.out_weight.cast<Scalar>().transpose() * h).transpose();
  z.array() += static_cast<Scalar>(params.out_bias);
  return z.unaryExpr([](Scalar v) { return softplus(v); });
}

template <typename Scalar>
VectorX<Scalar> backbone_forward(const TFMapT<Scalar>& tf, const BackboneParams& params) {
  return backbone_forward(tf.values, params);
}

void clamp_backbone(BackboneParams& params);

}  // namespace dydec
