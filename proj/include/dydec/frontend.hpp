#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dydec/convolution.hpp"
#include "dydec/egnorm.hpp"
#include "dydec/filterbank.hpp"
#include "dydec/types.hpp"

namespace dydec {

enum class DecomposeMode : std::uint8_t { dyadic = 0, single_scale = 1 };

/// Per-node normalization ahead of each filter.
enum class NormMode : std::uint8_t { egnorm = 0, batchnorm = 1, none = 2 };

inline constexpr double kBatchNormEpsilon = 1e-5;

/// Stacked leaf outputs: row b is the b-th leaf in construction order (low to high band).
template <typename Scalar = double>
struct TFMapT {
  MatrixRX<Scalar> values;
  double frame_rate = 0.0;

  [[nodiscard]] Eigen::Index bins() const { return values.rows(); }
  [[nodiscard]] Eigen::Index frames() const { return values.cols(); }
};
using TFMap = TFMapT<double>;

namespace detail {

template <typename Scalar>
VectorX<Scalar> normalize_node(const VectorX<Scalar>& x, const TreeNode& node, NormMode norm) {
  switch (norm) {
    case NormMode::egnorm:
      return eg_normalize(x, node.egnorm);
    case NormMode::batchnorm: {
      const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(node.bn.var + kBatchNormEpsilon));
      return ((x.array() - static_cast<Scalar>(node.bn.mean)) * scale).matrix();
    }
    case NormMode::none:
      break;
  }
  return x;
}

// y = conv(norm(x), kernel) + x
template <typename Scalar>
VectorX<Scalar> node_block(const VectorX<Scalar>& x, const TreeNode& node, const SincBandPass& filter,
                           Taper taper, NormMode norm) {
  const VectorX<Scalar> k = materialize_kernel<Scalar>(filter, taper);
  VectorX<Scalar> y = conv_same(normalize_node(x, node, norm), k);
  y += x;
  return y;
}

}  // namespace detail

inline void check_decompose_input(const AudioClip& clip, const DyadicTree& tree) {
  if (std::abs(clip.sample_rate - tree.base_sample_rate) > 1e-9)
    throw Error("decompose: clip sample rate does not match tree base rate");
  if (clip.size() == 0 || clip.size() % tree.total_decimation() != 0)
    throw Error("decompose: clip length must be a positive multiple of the total decimation");
}

/// Inference-path decomposition (no gradient bookkeeping). Batch-norm uses running statistics.
template <typename Scalar = double>
TFMapT<Scalar> decompose(const AudioClip& clip, const DyadicTree& tree,
                         DecomposeMode mode = DecomposeMode::dyadic, NormMode norm = NormMode::egnorm) {
  check_decompose_input(clip, tree);
  const VectorX<Scalar> input = clip.samples.cast<Scalar>();
  const int total = tree.total_decimation();
  const Eigen::Index frames = clip.size() / total;
  TFMapT<Scalar> tf;
  tf.values.resize(tree.leaf_count(), frames);
  tf.frame_rate = tree.base_sample_rate / total;

  if (mode == DecomposeMode::single_scale) {
    const auto& leaves = tree.levels.back();
    for (int b = 0; b < tree.leaf_count(); ++b) {
      SincBandPass f = leaves[b].filter;
      f.sample_rate = tree.base_sample_rate;
      const VectorX<Scalar> y = detail::node_block(input, leaves[b], f, tree.taper, norm);
      tf.values.row(b) = decimate(y, total).transpose();
    }
    return tf;
  }

  // Level-order traversal; `inputs` holds the signals entering the current depth.
  std::vector<VectorX<Scalar>> inputs{input};
  for (int d = 1; d <= tree.depth; ++d) {
    const auto& level = tree.levels[d - 1];
    std::vector<VectorX<Scalar>> outputs(level.size());
    for (std::size_t i = 0; i < level.size(); ++i) {
      const VectorX<Scalar>& x = inputs[i / 2];
      VectorX<Scalar> y = detail::node_block(x, level[i], level[i].filter, tree.taper, norm);
      outputs[i] = tree.decimates_after(d) ? decimate(y, 2) : std::move(y);
    }
    inputs = std::move(outputs);
  }
  for (int b = 0; b < tree.leaf_count(); ++b) tf.values.row(b) = inputs[b].transpose();
  return tf;
}

}  // namespace dydec
