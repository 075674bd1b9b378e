#include <doctest.h>

#include <functional>

#include "hsvc/autograd.h"
#include "hsvc/ops.h"
#include "test_support.h"

using namespace hsvc;
using namespace hsvc::nn;

namespace {

using Fn = std::function<Var(const std::vector<Var>&)>;

double weighted_sum(const Tensor& out, const Tensor& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * r[i];
  return acc;
}

// Compares backward() against central differences of sum(f(inputs) * R).
void check_gradients(const Fn& f, std::vector<Tensor> inputs, std::uint64_t seed,
                     double tol = 2e-2) {
  std::vector<Var> vars;
  for (auto& t : inputs) vars.push_back(parameter(t));
  const Var out = f(vars);
  const Tensor r = testing::random_tensor(out->value.shape(), seed);
  backward({{out, r}});

  const float eps = 1e-2f;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    REQUIRE_FALSE(vars[k]->grad.empty());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<Var> plus, minus;
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        Tensor p = inputs[j], m = inputs[j];
        if (j == k) {
          p[i] += eps;
          m[i] -= eps;
        }
        plus.push_back(constant(p));
        minus.push_back(constant(m));
      }
      const double numeric =
          (weighted_sum(f(plus)->value, r) - weighted_sum(f(minus)->value, r)) / (2.0 * eps);
      const double analytic = vars[k]->grad[i];
      CHECK(std::abs(numeric - analytic) <= tol * std::max(1.0, std::abs(numeric)));
    }
  }
}

}  // namespace

TEST_CASE("conv1d matches the scalar oracle") {
  struct Case {
    std::size_t cin, cout, K, T;
    Conv1dSpec spec;
  };
  for (const Case& c : {Case{3, 4, 3, 17, {1, 1, 1, 1, 1}}, Case{2, 6, 4, 20, {2, 1, 1, 1, 2}},
                        Case{4, 4, 3, 30, {1, 9, 9, 9, 4}}, Case{1, 3, 10, 40, {5, 1, 2, 3, 1}},
                        Case{8, 8, 41, 64, {4, 1, 20, 20, 4}}}) {
    const Tensor x = testing::random_tensor({c.cin, c.T}, 1);
    const Tensor w = testing::random_tensor({c.cout, c.cin / c.spec.groups, c.K}, 2);
    const Tensor b = testing::random_tensor({c.cout}, 3);
    const Var y = conv1d(constant(x), constant(w), constant(b), c.spec);
    const auto ref = testing::conv1d(testing::to_mat(x), w, b, c.spec.stride, c.spec.dilation,
                                     c.spec.pad_left, c.spec.pad_right, c.spec.groups);
    CHECK(testing::max_abs_diff(ref, y->value) < 1e-4);
  }
}

TEST_CASE("conv_transpose1d matches the scalar oracle") {
  for (int f : {1, 2, 4, 5}) {
    const std::size_t K = 2 * static_cast<std::size_t>(f);
    const Tensor x = testing::random_tensor({3, 7}, 4);
    const Tensor w = testing::random_tensor({3, 5, K}, 5);
    const Tensor b = testing::random_tensor({5}, 6);
    const Var y = conv_transpose1d(constant(x), constant(w), constant(b), f, f / 2, f - f / 2);
    CHECK(y->value.cols() == 7 * static_cast<std::size_t>(f));
    const auto ref = testing::conv_transpose1d(testing::to_mat(x), w, b, f, f / 2, f - f / 2);
    CHECK(testing::max_abs_diff(ref, y->value) < 1e-4);
  }
}

TEST_CASE("strided conv halves and transposed conv restores length") {
  for (int f : {2, 4, 5}) {
    const std::size_t T = 40;
    const auto K = 2 * static_cast<std::size_t>(f);
    const Var x = constant(testing::random_tensor({2, T}, 7));
    const Var d = conv1d(x, constant(testing::random_tensor({3, 2, K}, 8)),
                         constant(Tensor({3})), {f, 1, f / 2, f - f / 2, 1});
    CHECK(d->value.cols() == T / static_cast<std::size_t>(f));
  }
}

TEST_CASE("gradients of every op against finite differences") {
  check_gradients(
      [](const auto& v) { return conv1d(v[0], v[1], v[2], {2, 1, 1, 2, 1}); },
      {testing::random_tensor({2, 9}, 1), testing::random_tensor({3, 2, 4}, 2),
       testing::random_tensor({3}, 3)},
      10);
  check_gradients(
      [](const auto& v) { return conv1d(v[0], v[1], v[2], {1, 3, 3, 3, 2}); },
      {testing::random_tensor({4, 11}, 4), testing::random_tensor({2, 2, 3}, 5),
       testing::random_tensor({2}, 6)},
      11);
  check_gradients(
      [](const auto& v) { return conv_transpose1d(v[0], v[1], v[2], 4, 2, 2); },
      {testing::random_tensor({2, 5}, 7), testing::random_tensor({2, 3, 8}, 8),
       testing::random_tensor({3}, 9)},
      12);
  check_gradients([](const auto& v) { return leaky_relu(v[0], 0.2f); },
                  {testing::random_tensor({3, 8}, 10)}, 13);
  check_gradients([](const auto& v) { return nn::tanh(v[0]); },
                  {testing::random_tensor({3, 8}, 11)}, 14);
  check_gradients([](const auto& v) { return add(v[0], v[1]); },
                  {testing::random_tensor({3, 8}, 12), testing::random_tensor({3, 8}, 13)}, 15);
  check_gradients([](const auto& v) { return film(v[0], v[1], v[2], v[3], v[4]); },
                  {testing::random_tensor({2, 6}, 14), testing::random_tensor({2, 6}, 15),
                   testing::random_tensor({2, 6}, 16), testing::random_tensor({2, 6}, 17),
                   testing::random_tensor({2, 6}, 18)},
                  16);
  check_gradients([](const auto& v) { return time_mean(v[0]); },
                  {testing::random_tensor({3, 8}, 19)}, 17);
  check_gradients([](const auto& v) { return sub_column(v[0], v[1]); },
                  {testing::random_tensor({3, 8}, 20), testing::random_tensor({3, 1}, 21)}, 18);
  check_gradients([](const auto& v) { return add_column(v[0], v[1]); },
                  {testing::random_tensor({3, 8}, 22), testing::random_tensor({3, 1}, 23)}, 19);
  check_gradients([](const auto& v) { return slice_rows(v[0], 1, 3); },
                  {testing::random_tensor({4, 5}, 24)}, 20);
  check_gradients([](const auto& v) { return transpose(v[0]); },
                  {testing::random_tensor({4, 5}, 25)}, 21);
  check_gradients([](const auto& v) { return avg_pool(v[0], 2); },
                  {testing::random_tensor({1, 11}, 26)}, 22);
}

TEST_CASE("gradients accumulate through shared subgraphs") {
  const Var x = parameter(Tensor({1, 3}, std::vector<float>{1.0f, -2.0f, 3.0f}));
  const Var y = add(x, x);
  backward({{y, Tensor({1, 3}, 1.0f)}});
  for (float g : x->grad.values()) CHECK(g == 2.0f);
  // A second backward pass accumulates into the same leaf.
  backward({{y, Tensor({1, 3}, 1.0f)}});
  for (float g : x->grad.values()) CHECK(g == 4.0f);
}

TEST_CASE("constants and detached values carry no gradient path") {
  const Var p = parameter(Tensor({1, 2}, 1.0f));
  const Var c = constant(Tensor({1, 2}, 1.0f));
  const Var d = detach(add(p, c));
  CHECK_FALSE(d->requires_grad);
  const Var y = add(d, p);
  backward({{y, Tensor({1, 2}, 1.0f)}});
  CHECK(c->grad.empty());
  for (float g : p->grad.values()) CHECK(g == 1.0f);
}

TEST_CASE("backward rejects mismatched seeds") {
  const Var p = parameter(Tensor({1, 2}, 1.0f));
  CHECK_THROWS(backward({{p, Tensor({1, 3}, 1.0f)}}));
}
