#include "dydec/autodiff.hpp"

namespace dydec {

std::vector<Matrix>& TapeNode::grad_buffer() {
  if (grad.size() != value.size()) {
    grad.resize(value.size());
    for (std::size_t b = 0; b < value.size(); ++b) grad[b] = Matrix::Zero(value[b].rows(), value[b].cols());
  }
  return grad;
}

Var make_var(std::vector<Matrix> value, bool requires_grad) {
  auto v = std::make_shared<TapeNode>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

void GradTape::backward() {
  auto ops = std::move(ops_);
  ops_.clear();
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
    (*it)();
    ++replayed_;
  }
}

}  // namespace dydec
