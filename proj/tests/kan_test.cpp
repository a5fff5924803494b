#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "fkan/diagnostics.hpp"
#include "fkan/kan.hpp"

using namespace fkan;
using diagnostics::random_tensor;
using T = Tensor<double>;

namespace {

T forward(const T& x, KanLayer<double>& layer) {
  Graph<double> g(false);
  return kan_layer_forward(g.input(x), layer).value();
}

}  // namespace

TEST_CASE("grid geometry") {
  const SplineGrid grid;
  CHECK(grid.basis_count() == 8);
  CHECK(grid.knot_count() == 12);
  const std::vector<double> t = grid.knots();
  CHECK(t.front() == doctest::Approx(-2.2));
  CHECK(t[3] == -1.0);
  CHECK(t[8] == doctest::Approx(1.0));
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] > t[i - 1]);
  CHECK_THROWS_AS((SplineGrid{3, 5, 1.0, 1.0}.knots()), ConfigError);
  CHECK_THROWS_AS((SplineGrid{3, 0, -1.0, 1.0}.knots()), ConfigError);
}

TEST_CASE("basis at the left end sums to one") {
  const std::vector<double> b = bspline_basis(-1.0, SplineGrid{});
  double s = 0;
  for (double v : b) s += v;
  CHECK(std::abs(s - 1.0) < 1e-12);
}

TEST_CASE("degree-0 basis is the interval indicator") {
  const SplineGrid grid{0, 5, -1.0, 1.0};
  const std::vector<double> b = bspline_basis(-0.1, grid);
  CHECK(b == std::vector<double>{0, 0, 1, 0, 0});
  const std::vector<double> left = bspline_basis(-1.0, grid);
  CHECK(left == std::vector<double>{1, 0, 0, 0, 0});
}

TEST_CASE("basis matches the textbook recursion") {
  const SplineGrid grid;
  const std::vector<double> t = grid.knots();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int s = 0; s < 1000; ++s) {
    const double x = u(rng);
    const std::vector<double> b = bspline_basis(x, grid);
    for (int i = 0; i < grid.basis_count(); ++i) CHECK(std::abs(b[i] - diagnostics::reference_bspline(i, 3, x, t)) < 1e-12);
  }
}

TEST_CASE("basis properties over many grids") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int order = 1; order <= 4; ++order)
    for (int intervals : {1, 2, 5, 11}) {
      const SplineGrid grid{order, intervals, -0.5, 2.0};
      const std::vector<double> t = grid.knots();
      for (int s = 0; s < 200; ++s) {
        const double x = grid.lo + (grid.hi - grid.lo) * u(rng);
        const std::vector<double> b = bspline_basis(x, grid);
        double total = 0;
        int nonzero = 0;
        for (int i = 0; i < grid.basis_count(); ++i) {
          CHECK(b[i] >= 0.0);
          total += b[i];
          nonzero += b[i] != 0.0;
          // Support of B_i is [t_i, t_{i+k+1}).
          if (x < t[i] || x >= t[i + order + 1]) CHECK(b[i] == 0.0);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
        CHECK(nonzero <= order + 1);
      }
    }
}

TEST_CASE("basis outside the range uses the extended knots") {
  const SplineGrid grid;
  const std::vector<double> inside_ext = bspline_basis(-1.5, grid);
  double s = 0;
  for (double v : inside_ext) s += v;
  CHECK(s > 0.0);
  CHECK(s < 1.0);
  const std::vector<double> far = bspline_basis(10.0, grid);
  for (double v : far) CHECK(v == 0.0);
}

TEST_CASE("basis derivatives agree with finite differences") {
  const SplineGrid grid;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.9, 1.9);
  std::vector<double> v(8), d(8);
  for (int s = 0; s < 300; ++s) {
    const double x = u(rng);
    bspline_basis<double>(x, grid, v, d);
    const std::vector<double> up = bspline_basis(x + 1e-6, grid), down = bspline_basis(x - 1e-6, grid);
    for (int i = 0; i < 8; ++i) CHECK(d[i] == doctest::Approx((up[i] - down[i]) / 2e-6).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("kan_init") {
  const SplineGrid grid;
  const KanLayer<double> a = kan_init<double>(7, 3, grid, 99), b = kan_init<double>(7, 3, grid, 99);
  CHECK(a.coeffs.value == b.coeffs.value);
  CHECK(a.coeffs.value.shape() == Shape{3, 7, 8});
  CHECK(a.w_base.value == T::constant({3, 7}, 1.0));
  CHECK(a.w_spline.value == T::constant({3, 7}, 1.0));
  CHECK(a.parameter_count() == 3 * 7 * 8 + 2 * 21);
  CHECK_FALSE(kan_init<double>(7, 3, grid, 100).coeffs.value == a.coeffs.value);

  const KanLayer<double> big = kan_init<double>(100, 100, grid, 5);
  const auto& c = big.coeffs.value.array();
  const double mean = c.mean();
  const double var = (c - mean).square().sum() / static_cast<double>(c.size() - 1);
  const double expected = 0.01 / 8.0;
  CHECK(std::abs(var - expected) < 0.1 * expected);
  CHECK(std::abs(mean) < 0.01);
}

TEST_CASE("layer without splines sums silu features") {
  KanLayer<double> layer = kan_init<double>(3, 2, SplineGrid{}, 1);
  layer.coeffs.value.array() = 0.0;
  layer.w_spline.value = T({2, 3}, {5, -1, 2, 0.5, 3, 7});
  const T x({2, 3}, {0.3, -1.2, 2.5, 0.0, 0.9, -0.4});
  const T out = forward(x, layer);
  for (Index s = 0; s < 2; ++s) {
    const double expected = silu(x.at(s, 0)) + silu(x.at(s, 1)) + silu(x.at(s, 2));
    CHECK(out.at(s, 0) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(out.at(s, 1) == doctest::Approx(expected).epsilon(1e-15));
  }
  layer.w_base.value = T({2, 3}, {1, 2, 3, -1, 0, 4});
  layer.w_spline.value.array() = 0.0;
  layer.coeffs.value.array() = 0.3;
  const T mixed = forward(x, layer);
  CHECK(mixed.at(1, 1) == doctest::Approx(-silu(0.0) + 4 * silu(-0.4)).epsilon(1e-15));
}

TEST_CASE("zero input with zero coefficients gives zero") {
  KanLayer<double> layer = kan_init<double>(4, 3, SplineGrid{}, 2);
  layer.coeffs.value.array() = 0.0;
  CHECK(forward(T({2, 4}), layer) == T({2, 3}));
}

TEST_CASE("single edge interpolating x^2") {
  const SplineGrid grid;
  const std::vector<double> t = grid.knots();
  const int nb = grid.basis_count();
  // Collocation at evenly spaced interior points (Schoenberg-Whitney holds).
  Eigen::MatrixXd a(nb, nb);
  Eigen::VectorXd rhs(nb);
  for (int i = 0; i < nb; ++i) {
    const double xi = -1.0 + 2.0 * (i + 0.5) / nb;
    const std::vector<double> b = bspline_basis(xi, grid);
    for (int j = 0; j < nb; ++j) a(i, j) = b[j];
    rhs(i) = xi * xi;
  }
  const Eigen::VectorXd c = a.fullPivLu().solve(rhs);
  // Marsden coefficients of x^2 for a cubic: mean of pairwise knot products.
  REQUIRE(grid.order == 3);
  for (int i = 0; i < nb; ++i) {
    const double m = (t[i + 1] * t[i + 2] + t[i + 1] * t[i + 3] + t[i + 2] * t[i + 3]) / 3.0;
    CHECK(std::abs(c(i) - m) < 1e-12);
  }

  KanLayer<double> layer = kan_init<double>(1, 1, grid, 0);
  for (int i = 0; i < nb; ++i) layer.coeffs.value[i] = c(i);
  layer.w_base.value[0] = 0.0;
  layer.w_spline.value[0] = 1.0;

  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  T x({100, 1});
  for (Index i = 0; i < 100; ++i) x[i] = u(rng);
  const T out = forward(x, layer);
  for (Index s = 0; s < 100; ++s) {
    double direct = 0;
    for (int i = 0; i < nb; ++i) direct += c(i) * diagnostics::reference_bspline(i, grid.order, x[s], t);
    CHECK(std::abs(out[s] - direct) < 1e-12);
    // Cubic splines reproduce quadratics.
    CHECK(std::abs(out[s] - x[s] * x[s]) < 1e-12);
  }
}

TEST_CASE("layer is linear in its weight groups") {
  std::mt19937_64 rng(25);
  KanLayer<double> layer = kan_init<double>(5, 4, SplineGrid{}, rng);
  layer.w_base.value = random_tensor({4, 5}, -1, 1, rng);
  layer.w_spline.value = random_tensor({4, 5}, -1, 1, rng);
  const T x = random_tensor({6, 5}, -1.5, 1.5, rng);
  const T base = forward(x, layer);
  // Doubling (w_b, w_s) or (w_b, c) doubles the output; doubling all three
  // doubles w_b's term and quadruples the spline term (w_s * c is bilinear).
  KanLayer<double> l1 = layer;
  l1.w_base.value.array() *= 2.0;
  l1.w_spline.value.array() *= 2.0;
  const T o1 = forward(x, l1);
  KanLayer<double> l2 = layer;
  l2.w_base.value.array() *= 2.0;
  l2.coeffs.value.array() *= 2.0;
  const T o2 = forward(x, l2);
  for (Index i = 0; i < base.size(); ++i) {
    CHECK(o1[i] == 2.0 * base[i]);
    CHECK(o2[i] == 2.0 * base[i]);
  }
  KanLayer<double> no_spline = layer;
  no_spline.w_spline.value.array() = 0.0;
  KanLayer<double> spline_only = layer;
  spline_only.w_base.value.array() = 0.0;
  KanLayer<double> l3 = layer;
  l3.w_base.value.array() *= 2.0;
  l3.w_spline.value.array() *= 2.0;
  l3.coeffs.value.array() *= 2.0;
  const T o3 = forward(x, l3), ob = forward(x, no_spline), os = forward(x, spline_only);
  for (Index i = 0; i < base.size(); ++i) CHECK(o3[i] == doctest::Approx(2.0 * ob[i] + 4.0 * os[i]).epsilon(1e-13));
}

TEST_CASE("layer rejects mismatched inputs") {
  KanLayer<double> layer = kan_init<double>(4, 3, SplineGrid{}, 2);
  Graph<double> g;
  CHECK_THROWS_AS(kan_layer_forward(g.input(T({2, 5})), layer), ShapeError);
}

TEST_CASE("stack composition") {
  std::mt19937_64 rng(26);
  const SplineGrid grid;
  std::vector<KanLayer<double>> one{kan_init<double>(4, 3, grid, rng)};
  const T x = random_tensor({3, 4}, -1, 1, rng);
  Graph<double> g(false);
  CHECK(kan_stack_forward(g.input(x), std::span<KanLayer<double>>(one)).value() == forward(x, one[0]));

  std::vector<KanLayer<double>> two{kan_init<double>(4, 3, grid, rng), kan_init<double>(3, 1, grid, rng)};
  two[1].coeffs.value.array() = 0.0;
  const T hidden = forward(x, two[0]);
  const T out = kan_stack_forward(g.input(x), std::span<KanLayer<double>>(two)).value();
  for (Index s = 0; s < 3; ++s) {
    double expected = 0;
    for (Index j = 0; j < 3; ++j) expected += silu(hidden.at(s, j));
    CHECK(out.at(s, 0) == doctest::Approx(expected).epsilon(1e-14));
  }

  std::vector<KanLayer<double>> broken{kan_init<double>(4, 3, grid, rng), kan_init<double>(2, 1, grid, rng)};
  CHECK_THROWS_AS(kan_stack_forward(g.input(x), std::span<KanLayer<double>>(broken)), ShapeError);
}

TEST_CASE("layer gradients agree with finite differences") {
  std::mt19937_64 rng(27);
  const SplineGrid grid;
  for (int trial = 0; trial < 5; ++trial) {
    KanLayer<double> layer = kan_init<double>(3, 2, grid, rng);
    layer.w_base.value = random_tensor({2, 3}, -1, 1, rng);
    layer.w_spline.value = random_tensor({2, 3}, -1, 1, rng);
    Parameter<double> x("x", random_tensor({4, 3}, -2, 2, rng));
    const T w = random_tensor({4, 2}, -1, 1, rng);
    std::vector<Parameter<double>*> targets{&x, &layer.coeffs, &layer.w_base, &layer.w_spline};
    const auto report = diagnostics::check_gradients(targets, [&](Graph<double>& g) {
      return sum(mul(kan_layer_forward(g.parameter(x), layer), g.input(w)));
    });
    INFO(report.worst);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("spline suite") {
  const auto report = diagnostics::run_spline_suite();
  CHECK(report.passed);
}
