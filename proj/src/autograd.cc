#include "hsvc/autograd.h"

#include <stdexcept>
#include <unordered_set>

namespace hsvc::nn {

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs)
    if (in && in->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

Var detach(const Var& v) { return constant(v->value); }

void backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  for (const auto& [root, seed] : seeds) {
    if (!root->requires_grad) continue;
    if (!seed.same_shape(root->value))
      throw std::invalid_argument("backward: seed shape " + seed.shape_string() +
                                  " does not match root " + root->value.shape_string());
    Tensor& g = root->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    if (visited.insert(root.get()).second) stack.emplace_back(root.get(), 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].get();
        if (child && child->requires_grad && visited.insert(child).second)
          stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn) continue;
    if (!node->grad.empty()) node->backward_fn(*node);
    // Interior gradients are consumed; only leaves accumulate across passes.
    node->grad = Tensor();
  }
}

}  // namespace hsvc::nn
