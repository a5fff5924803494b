#include "fkan/kan.hpp"

#include <cmath>

namespace fkan {

std::vector<double> SplineGrid::knots() const {
  validate();
  const double step = (hi - lo) / intervals;
  std::vector<double> t(static_cast<std::size_t>(knot_count()));
  for (int j = 0; j < knot_count(); ++j) t[static_cast<std::size_t>(j)] = lo + (j - order) * step;
  return t;
}

void SplineGrid::validate() const {
  if (order < 0) throw ConfigError("spline order must be >= 0");
  if (intervals < 1) throw ConfigError("spline grid needs at least one interval");
  if (!(lo < hi)) throw ConfigError("spline grid range must satisfy lo < hi");
}

namespace {

// Knot vector and scratch rows reused across evaluations on one grid.
template <typename Scalar>
class BasisEvaluator {
 public:
  explicit BasisEvaluator(const SplineGrid& grid) : order_(grid.order), count_(grid.basis_count()) {
    const std::vector<double> td = grid.knots();
    knots_.assign(td.begin(), td.end());
    level_.resize(knots_.size());
    previous_.resize(knots_.size());
  }

  void operator()(Scalar x, Scalar* values, Scalar* derivatives) {
    const int k = order_;
    const Scalar* t = knots_.data();
    const int spans = static_cast<int>(knots_.size()) - 1;
    for (int j = 0; j < spans; ++j) level_[j] = (x >= t[j] && x < t[j + 1]) ? Scalar(1) : Scalar(0);
    for (int d = 1; d <= k; ++d) {
      std::swap(level_, previous_);
      for (int j = 0; j < spans - d; ++j) {
        const Scalar left = (x - t[j]) / (t[j + d] - t[j]) * previous_[j];
        const Scalar right = (t[j + d + 1] - x) / (t[j + d + 1] - t[j + 1]) * previous_[j + 1];
        level_[j] = left + right;
      }
    }
    for (int i = 0; i < count_; ++i) values[i] = level_[i];
    if (derivatives == nullptr) return;
    for (int i = 0; i < count_; ++i) {
      // previous_ holds degree k-1 values once k >= 1.
      derivatives[i] = k == 0 ? Scalar(0)
                              : Scalar(k) * (previous_[i] / (t[i + k] - t[i]) -
                                             previous_[i + 1] / (t[i + k + 1] - t[i + 1]));
    }
  }

 private:
  int order_;
  int count_;
  std::vector<Scalar> knots_;
  std::vector<Scalar> level_;
  std::vector<Scalar> previous_;
};

}  // namespace

template <typename Scalar>
void bspline_basis(Scalar x, const SplineGrid& grid, std::span<Scalar> values, std::span<Scalar> derivatives) {
  const auto nb = static_cast<std::size_t>(grid.basis_count());
  if (values.size() != nb) throw ShapeError("bspline_basis: output span has wrong length");
  if (!derivatives.empty() && derivatives.size() != nb) {
    throw ShapeError("bspline_basis: derivative span has wrong length");
  }
  BasisEvaluator<Scalar> eval(grid);
  eval(x, values.data(), derivatives.empty() ? nullptr : derivatives.data());
}

template <typename Scalar>
Var<Scalar> bspline_basis(Var<Scalar> x, const SplineGrid& grid) {
  const Tensor<Scalar>& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("bspline_basis: expected [N, n], got " + to_string(xv.shape()));
  const Index nb = grid.basis_count();
  Tensor<Scalar> out({xv.dim(0), xv.dim(1), nb});
  auto slopes = std::make_shared<Tensor<Scalar>>(out.shape());
  BasisEvaluator<Scalar> eval(grid);
  for (Index e = 0; e < xv.size(); ++e) eval(xv[e], out.data() + e * nb, slopes->data() + e * nb);
  return x.graph->record(std::move(out), {x}, [x, slopes, nb](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    auto& gx = gr.grad(x);
    for (Index e = 0; e < gx.size(); ++e) {
      Scalar acc = 0;
      for (Index i = 0; i < nb; ++i) acc += go[e * nb + i] * (*slopes)[e * nb + i];
      gx[e] += acc;
    }
  });
}

template <typename Scalar>
KanLayer<Scalar> kan_init(Index in_features, Index out_features, const SplineGrid& grid, std::mt19937_64& rng) {
  grid.validate();
  if (in_features < 1 || out_features < 1) throw ConfigError("kan_init: feature counts must be positive");
  const Index nb = grid.basis_count();
  std::normal_distribution<double> normal(0.0, 0.1 / std::sqrt(static_cast<double>(nb)));
  Tensor<Scalar> coeffs({out_features, in_features, nb});
  for (Index i = 0; i < coeffs.size(); ++i) coeffs[i] = static_cast<Scalar>(normal(rng));
  KanLayer<Scalar> layer;
  layer.in_features = in_features;
  layer.out_features = out_features;
  layer.grid = grid;
  layer.coeffs = Parameter<Scalar>("coeffs", std::move(coeffs));
  layer.w_base = Parameter<Scalar>("w_base", Tensor<Scalar>::constant({out_features, in_features}, Scalar(1)));
  layer.w_spline = Parameter<Scalar>("w_spline", Tensor<Scalar>::constant({out_features, in_features}, Scalar(1)));
  return layer;
}

template <typename Scalar>
Var<Scalar> kan_layer_forward(Var<Scalar> x, Var<Scalar> coeffs, Var<Scalar> w_base, Var<Scalar> w_spline,
                              const SplineGrid& grid) {
  const Shape& xs = x.shape();
  const Shape& cs = coeffs.shape();
  if (xs.size() != 2 || cs.size() != 3) throw ShapeError("kan_layer_forward: expected x [N, n] and coeffs [out, n, nb]");
  const Index in = cs[1], out = cs[0], nb = cs[2];
  if (xs[1] != in) {
    throw ShapeError("kan_layer_forward: input has " + std::to_string(xs[1]) + " features, layer expects " +
                     std::to_string(in));
  }
  if (nb != grid.basis_count()) throw ShapeError("kan_layer_forward: coefficient count does not match grid");
  if (w_base.shape() != Shape{out, in} || w_spline.shape() != Shape{out, in}) {
    throw ShapeError("kan_layer_forward: w_base / w_spline must be [out, in]");
  }
  Var<Scalar> base = matmul(activate(Activation::kSilu, x), transpose(w_base));
  Var<Scalar> effective = reshape(scale_last(coeffs, w_spline), Shape{out, in * nb});
  Var<Scalar> bases = reshape(bspline_basis(x, grid), Shape{xs[0], in * nb});
  Var<Scalar> spline = matmul(bases, transpose(effective));
  return add(base, spline);
}

template <typename Scalar>
Var<Scalar> kan_layer_forward(Var<Scalar> x, KanLayer<Scalar>& layer) {
  Graph<Scalar>& g = *x.graph;
  return kan_layer_forward(x, g.parameter(layer.coeffs), g.parameter(layer.w_base), g.parameter(layer.w_spline),
                           layer.grid);
}

template <typename Scalar>
Var<Scalar> kan_stack_forward(Var<Scalar> x, std::span<KanLayer<Scalar>> layers) {
  if (layers.empty()) throw ShapeError("kan_stack_forward: empty layer list");
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].in_features != layers[l - 1].out_features) {
      throw ShapeError("kan_stack_forward: layer " + std::to_string(l) + " expects " +
                       std::to_string(layers[l].in_features) + " inputs but previous layer yields " +
                       std::to_string(layers[l - 1].out_features));
    }
  }
  for (auto& layer : layers) x = kan_layer_forward(x, layer);
  return x;
}

#define FKAN_INSTANTIATE_KAN(S)                                                                   \
  template void bspline_basis<S>(S, const SplineGrid&, std::span<S>, std::span<S>);               \
  template Var<S> bspline_basis<S>(Var<S>, const SplineGrid&);                                    \
  template KanLayer<S> kan_init<S>(Index, Index, const SplineGrid&, std::mt19937_64&);            \
  template Var<S> kan_layer_forward<S>(Var<S>, Var<S>, Var<S>, Var<S>, const SplineGrid&);        \
  template Var<S> kan_layer_forward<S>(Var<S>, KanLayer<S>&);                                     \
  template Var<S> kan_stack_forward<S>(Var<S>, std::span<KanLayer<S>>);

FKAN_INSTANTIATE_KAN(float)
FKAN_INSTANTIATE_KAN(double)

}  // namespace fkan
