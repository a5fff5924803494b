#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fkan/ops.hpp"

namespace fkan {

/// Uniform B-spline grid on [lo, hi] with `order` extra knots beyond each end.
struct SplineGrid {
  int order = 3;
  int intervals = 5;
  double lo = -1.0;
  double hi = 1.0;

  int basis_count() const { return intervals + order; }
  int knot_count() const { return intervals + 2 * order + 1; }

  /// t_j = lo + (j - order) * (hi - lo) / intervals, j = 0 .. knot_count()-1.
  std::vector<double> knots() const;

  void validate() const;
};

/// Cox-de Boor evaluation of all basis_count() basis functions at x.
/// Optionally writes dB_i/dx into `derivatives`.
template <typename Scalar>
void bspline_basis(Scalar x, const SplineGrid& grid, std::span<Scalar> values, std::span<Scalar> derivatives = {});

template <typename Scalar>
std::vector<Scalar> bspline_basis(Scalar x, const SplineGrid& grid) {
  std::vector<Scalar> out(static_cast<std::size_t>(grid.basis_count()));
  bspline_basis<Scalar>(x, grid, std::span<Scalar>(out));
  return out;
}

/// [N, n] -> [N, n, basis_count()].
template <typename Scalar>
Var<Scalar> bspline_basis(Var<Scalar> x, const SplineGrid& grid);

/// One Kolmogorov-Arnold layer. Edge (j, p) carries
///   phi(x) = w_b[j,p] * silu(x) + w_s[j,p] * sum_i coeffs[j,p,i] * B_i(x)
/// and output j sums its incoming edges.
template <typename Scalar>
struct KanLayer {
  Index in_features = 0;
  Index out_features = 0;
  SplineGrid grid;
  Parameter<Scalar> coeffs;  // [out, in, basis_count]
  Parameter<Scalar> w_base;  // [out, in]
  Parameter<Scalar> w_spline;  // [out, in]

  Index parameter_count() const { return coeffs.value.size() + w_base.value.size() + w_spline.value.size(); }
};

/// coeffs ~ Normal(0, 0.1 / sqrt(basis_count)), w_base = w_spline = 1.
template <typename Scalar>
KanLayer<Scalar> kan_init(Index in_features, Index out_features, const SplineGrid& grid, std::mt19937_64& rng);

template <typename Scalar>
KanLayer<Scalar> kan_init(Index in_features, Index out_features, const SplineGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return kan_init<Scalar>(in_features, out_features, grid, rng);
}

/// x [N, in] -> [N, out] from explicit parameter nodes.
template <typename Scalar>
Var<Scalar> kan_layer_forward(Var<Scalar> x, Var<Scalar> coeffs, Var<Scalar> w_base, Var<Scalar> w_spline,
                              const SplineGrid& grid);

template <typename Scalar>
Var<Scalar> kan_layer_forward(Var<Scalar> x, KanLayer<Scalar>& layer);

template <typename Scalar>
Var<Scalar> kan_stack_forward(Var<Scalar> x, std::span<KanLayer<Scalar>> layers);

}  // namespace fkan
