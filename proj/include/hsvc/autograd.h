// Minimal reverse-mode differentiation over Tensors.
//
// Every op returns a Var (shared node) that remembers its inputs and a
// closure propagating the node's gradient into its inputs' gradients.
// Parameters are persistent leaf nodes; their gradients accumulate across
// backward passes until cleared by the optimizer.

#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "hsvc/tensor.h"

namespace hsvc::nn {

struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  // Returns grad, allocating zeros shaped like value on first use.
  Tensor& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0f);
    return grad;
  }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var parameter(Tensor value);

// Creates an op node; it requires grad iff any input does, in which case
// backward_fn is kept.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

// Same value, no gradient path.
Var detach(const Var& v);

// Seeds each root with the given gradient (shape must match the root) and
// propagates through the graph in reverse topological order.
void backward(const std::vector<std::pair<Var, Tensor>>& seeds);

}  // namespace hsvc::nn
