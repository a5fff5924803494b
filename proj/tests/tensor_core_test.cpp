#include <cmath>
#include <random>

#include "doctest.h"
#include "fkan/diagnostics.hpp"
#include "fkan/ops.hpp"

using namespace fkan;
using diagnostics::random_tensor;

using T = Tensor<double>;

TEST_CASE("tensor shape and storage agree") {
  T t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  t.at(1, 2, 3) = 5.0;
  CHECK(t[23] == 5.0);
  CHECK_THROWS_AS(T({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK(t.reshaped({6, 4}).at(5, 3) == 5.0);
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
}

TEST_CASE("elementwise arithmetic") {
  Graph<double> g;
  auto a = g.input(T({2}, {1.0, 2.0}));
  auto b = g.input(T({2}, {3.0, 4.0}));
  CHECK(add(a, b).value() == T({2}, {4.0, 6.0}));
  CHECK(mul(a, 0.0).value() == T({2}, {0.0, 0.0}));
  CHECK(sub(b, a).value() == T({2}, {2.0, 2.0}));
  CHECK(div(b, a).value() == T({2}, {3.0, 2.0}));
  CHECK_THROWS_AS(add(a, g.input(T({3}))), ShapeError);
}

TEST_CASE("division by zero is rejected under debug checks") {
  ScopedDebugChecks on(true);
  Graph<double> g;
  CHECK_THROWS_AS(div(g.input(T({1}, {1.0})), g.input(T({1}, {0.0}))), NumericalError);
  ScopedDebugChecks off(false);
  Graph<double> h;
  CHECK(std::isinf(div(h.input(T({1}, {1.0})), h.input(T({1}, {0.0}))).value()[0]));
}

TEST_CASE("matmul") {
  Graph<double> g;
  auto eye = g.input(T({2, 2}, {1, 0, 0, 1}));
  auto m = g.input(T({2, 2}, {1, 2, 3, 4}));
  CHECK(matmul(eye, m).value() == m.value());
  CHECK(matmul(g.input(T({1, 2}, {1, 2})), g.input(T({2, 1}, {3, 4}))).value() == T({1, 1}, {11.0}));
  CHECK_THROWS_AS(matmul(m, g.input(T({3, 2}))), ShapeError);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const T a = random_tensor({5, 7}, -2, 2, rng), b = random_tensor({7, 3}, -2, 2, rng);
    CHECK(matmul(g.input(a), g.input(b)).value() == diagnostics::naive_matmul(a, b));
  }
}

TEST_CASE("conv2d") {
  Graph<double> g;
  const T image({1, 1, 2, 2}, {1, 2, 3, 4});
  auto identity = conv2d(g.input(image), g.input(T({1, 1, 1, 1}, {1.0})), g.input(T({1})), 1);
  CHECK(identity.value() == image);
  auto ones = conv2d(g.input(image), g.input(T::constant({1, 1, 2, 2}, 1.0)), g.input(T({1})), 1);
  CHECK(ones.value() == T({1, 1, 1, 1}, {10.0}));
  CHECK_THROWS_AS(conv2d(g.input(T({1, 1, 6, 6})), g.input(T({1, 1, 3, 3})), g.input(T({1})), 2), ShapeError);
  CHECK_THROWS_AS(conv2d(g.input(T({1, 2, 6, 6})), g.input(T({1, 1, 3, 3})), g.input(T({1})), 1), ShapeError);

  std::mt19937_64 rng(5);
  const T x = random_tensor({2, 3, 8, 8}, -2, 2, rng), k = random_tensor({4, 3, 3, 3}, -2, 2, rng),
          bias = random_tensor({4}, -2, 2, rng);
  const T out = conv2d(g.input(x), g.input(k), g.input(bias), 1).value();
  const T ref = diagnostics::naive_conv2d(x, k, bias, 1);
  CHECK((out.array() - ref.array()).abs().maxCoeff() < 1e-12);
  CHECK(out == ref);

  for (Index stride : {1, 2}) {
    const T big = random_tensor({4, 4, 10, 10}, -2, 2, rng), kk = random_tensor({3, 4, 4, 4}, -2, 2, rng),
            bb = random_tensor({3}, -2, 2, rng);
    CHECK(conv2d(g.input(big), g.input(kk), g.input(bb), stride).value() == diagnostics::naive_conv2d(big, kk, bb, stride));
  }
}

TEST_CASE("activations") {
  Graph<double> g;
  CHECK(activate(Activation::kSilu, g.input(T({1}, {0.0}))).value()[0] == 0.0);
  CHECK(activate(Activation::kSilu, g.input(T({1}, {1.0}))).value()[0] == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(activate(Activation::kRelu, g.input(T({1}, {-3.0}))).value()[0] == 0.0);
  CHECK(activate(Activation::kTanh, g.input(T({1}, {0.5}))).value()[0] == std::tanh(0.5));
  CHECK(silu_derivative(0.0) == 0.5);
  CHECK(parse_activation("relu") == Activation::kRelu);
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}

TEST_CASE("softmax cross-entropy") {
  Graph<double> g;
  const std::vector<int> zero{0};
  CHECK(softmax_cross_entropy(g.input(T({1, 2}, {0, 0})), zero).value().item() == doctest::Approx(std::log(2.0)));
  const double big = softmax_cross_entropy(g.input(T({1, 2}, {1000, 0})), zero).value().item();
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(0.0));
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(softmax_cross_entropy(g.input(T({1, 2})), bad), ShapeError);

  std::mt19937_64 rng(9);
  const std::vector<int> labels{1, 4, 9, 0};
  for (int trial = 0; trial < 10; ++trial) {
    const T z = random_tensor({4, 10}, -5, 5, rng);
    const long double ref = diagnostics::reference_cross_entropy(z, labels);
    const double got = softmax_cross_entropy(g.input(z), labels).value().item();
    CHECK(static_cast<double>(std::abs((got - ref) / ref)) < 1e-12);
  }
}

TEST_CASE("softmax cross-entropy gradient is (p - onehot) / N") {
  Graph<double> g;
  auto z = g.variable(T({2, 2}, {0, 0, 0, 0}));
  const std::vector<int> labels{0, 1};
  g.backward(softmax_cross_entropy(z, labels));
  CHECK(g.grad_of(z) == T({2, 2}, {-0.25, 0.25, 0.25, -0.25}));
}

TEST_CASE("backward basics") {
  {
    Graph<double> g;
    auto x = g.variable(T({3}, {0.3, -1.0, 7.0}));
    g.backward(sum(x));
    CHECK(g.grad_of(x) == T::constant({3}, 1.0));
  }
  {
    Graph<double> g;
    auto x = g.variable(T({2}, {1.0, 2.0}));
    g.backward(sum(mul(x, x)));
    CHECK(g.grad_of(x) == T({2}, {2.0, 4.0}));
  }
  {
    Graph<double> g;
    auto x = g.variable(T({1}, {3.0}));
    auto loss = sum(x);
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), GraphError);
  }
  {
    Graph<double> g;
    CHECK_THROWS_AS(g.backward(g.variable(T({2}))), GraphError);
  }
}

TEST_CASE("a node feeding two consumers accumulates both contributions") {
  Graph<double> g;
  auto x = g.variable(T({2}, {1.5, -2.0}));
  auto y = add(mul(x, 3.0), mul(x, x));
  g.backward(sum(y));
  CHECK(g.grad_of(x) == T({2}, {3.0 + 3.0, 3.0 - 4.0}));
}

TEST_CASE("parameters accumulate across graphs until zeroed") {
  Parameter<double> p("p", T({2}, {1.0, 2.0}));
  p.zero_grad();
  for (int i = 0; i < 2; ++i) {
    Graph<double> g;
    g.backward(sum(mul(g.parameter(p), 2.0)));
  }
  CHECK(p.grad == T({2}, {4.0, 4.0}));
  p.zero_grad();
  CHECK(p.grad == T({2}, {0.0, 0.0}));
}

TEST_CASE("reductions, reshape, padding and windows") {
  Graph<double> g;
  auto x = g.input(T({2, 3}, {1, 5, 3, 4, 4, 2}));
  CHECK(reduce_sum(x, 1).value() == T({2}, {9, 10}));
  CHECK(reduce_mean(x, 0).value() == T({3}, {2.5, 4.5, 2.5}));
  CHECK(reduce_max(x, -1).value() == T({2}, {5, 4}));
  CHECK(flatten(g.input(T({2, 2, 2}))).value().shape() == Shape{2, 4});
  CHECK(reshape(x, {3, 2}).value().at(2, 1) == 2.0);
  CHECK_THROWS_AS(reshape(x, {4, 2}), ShapeError);

  auto padded = zero_pad2d(g.input(T({1, 1, 1, 1}, {7.0})), 2);
  CHECK(padded.value().shape() == Shape{1, 1, 5, 5});
  CHECK(padded.value().at(0, 0, 2, 2) == 7.0);
  CHECK(padded.value().array().sum() == 7.0);

  auto windows = extract_windows(g.input(T({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8})), 2, 2);
  CHECK(windows.value() == T({1, 1, 1, 2, 4}, {1, 2, 5, 6, 3, 4, 7, 8}));

  auto picked = gather(x, {5, 0}, {2});
  CHECK(picked.value() == T({2}, {2, 1}));
}

TEST_CASE("reduce_max routes the gradient to the first maximum") {
  Graph<double> g;
  auto x = g.variable(T({1, 3}, {2.0, 2.0, 1.0}));
  g.backward(sum(reduce_max(x, 1)));
  CHECK(g.grad_of(x) == T({1, 3}, {1.0, 0.0, 0.0}));
}

TEST_CASE("forward passes are bit-reproducible") {
  std::mt19937_64 rng(1);
  const T x = random_tensor({2, 3, 8, 8}, -2, 2, rng), k = random_tensor({4, 3, 3, 3}, -2, 2, rng),
          b = random_tensor({4}, -2, 2, rng);
  Graph<double> g1, g2;
  CHECK(conv2d(g1.input(x), g1.input(k), g1.input(b)).value() == conv2d(g2.input(x), g2.input(k), g2.input(b)).value());
}

TEST_CASE("single precision graph works end to end") {
  Graph<float> g;
  auto x = g.variable(Tensor<float>({2}, {1.0f, 2.0f}));
  g.backward(sum(mul(x, x)));
  CHECK(g.grad_of(x) == Tensor<float>({2}, {2.0f, 4.0f}));
}
