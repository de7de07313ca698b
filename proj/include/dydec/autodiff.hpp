#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dydec/types.hpp"

namespace dydec {

/// A batch-valued tape node: one matrix per batch item, plus its accumulated gradient.
struct TapeNode {
  std::vector<Matrix> value;
  std::vector<Matrix> grad;  ///< lazily allocated, same shapes as value
  bool requires_grad = true;

  [[nodiscard]] std::size_t batch() const { return value.size(); }
  /// Allocates zero gradients on first use.
  std::vector<Matrix>& grad_buffer();
};
using Var = std::shared_ptr<TapeNode>;

Var make_var(std::vector<Matrix> value, bool requires_grad = true);

/// Reverse-mode tape. Each op records a closure that reads its output gradient and
/// accumulates into its inputs and into the parameter-gradient model it was given.
class GradTape {
 public:
  void record(std::function<void()> backward) { ops_.push_back(std::move(backward)); }

  /// Replays the recorded closures once, newest first, then clears the tape.
  void backward();

  [[nodiscard]] std::size_t size() const { return ops_.size(); }
  [[nodiscard]] std::size_t replayed() const { return replayed_; }

 private:
  std::vector<std::function<void()>> ops_;
  std::size_t replayed_ = 0;
};

}  // namespace dydec
