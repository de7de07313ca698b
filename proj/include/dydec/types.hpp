#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dydec {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Row-major so that each channel (row) of a time-frequency map is contiguous.
template <typename Scalar>
using MatrixRX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<double>;
using Matrix = MatrixRX<double>;

/// Mono sample buffer. Every stage of the pipeline consumes or produces one.
struct AudioClip {
  Vector samples;
  double sample_rate = 24000.0;

  [[nodiscard]] double duration() const {
    return sample_rate > 0.0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  [[nodiscard]] Eigen::Index size() const { return samples.size(); }
};

/// Thrown on violated preconditions (bad shapes, out-of-range configs).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dydec
