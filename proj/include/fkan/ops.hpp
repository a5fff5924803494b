#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fkan/graph.hpp"

namespace fkan {

enum class Elementwise { kAdd, kSub, kMul, kDiv };
enum class Activation { kRelu, kSilu, kTanh };

const char* to_string(Activation kind);
Activation parse_activation(const std::string& name);

// Scalar activation helpers shared by the graph ops and the KAN base branch.
template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
inline Scalar silu(Scalar x) {
  return x / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
inline Scalar silu_derivative(Scalar x) {
  const Scalar s = sigmoid(x);
  return s * (Scalar(1) + x * (Scalar(1) - s));
}

// Elementwise arithmetic. Operands must have equal shapes; the scalar
// overloads broadcast b over every element of a.
template <typename Scalar>
Var<Scalar> elementwise(Elementwise op, Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> elementwise(Elementwise op, Var<Scalar> a, Scalar b);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) { return elementwise(Elementwise::kAdd, a, b); }
template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) { return elementwise(Elementwise::kSub, a, b); }
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) { return elementwise(Elementwise::kMul, a, b); }
template <typename Scalar>
Var<Scalar> div(Var<Scalar> a, Var<Scalar> b) { return elementwise(Elementwise::kDiv, a, b); }
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Scalar b) { return elementwise(Elementwise::kMul, a, b); }

/// [m x k] * [k x n] -> [m x n]. Each output element is summed sequentially
/// over k, so results match a naive triple loop bit for bit.
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a);

/// a[..., n] + bias[n], bias broadcast over the leading axes.
template <typename Scalar>
Var<Scalar> add_bias(Var<Scalar> a, Var<Scalar> bias);

/// a[..., n] * s[...], s broadcast over the trailing axis of a.
template <typename Scalar>
Var<Scalar> scale_last(Var<Scalar> a, Var<Scalar> s);

/// Valid cross-correlation. input [N,C,H,W], kernels [F,C,k,k], bias [F].
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernels, Var<Scalar> bias, Index stride = 1);

template <typename Scalar>
Var<Scalar> activate(Activation kind, Var<Scalar> x);

/// Mean over the batch of -log softmax(logits)[label]; logits [N,K].
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(Var<Scalar> logits, std::span<const int> labels);

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape shape);

/// [N, ...] -> [N, prod(...)]
template <typename Scalar>
Var<Scalar> flatten(Var<Scalar> x);

/// Zero border of `pad` pixels around the two trailing axes of [N,C,H,W].
template <typename Scalar>
Var<Scalar> zero_pad2d(Var<Scalar> x, Index pad);

/// [N,C,H,W] -> [N,C,H',W',k*k], window elements in row-major order.
template <typename Scalar>
Var<Scalar> extract_windows(Var<Scalar> x, Index window, Index stride);

template <typename Scalar>
Var<Scalar> reduce_sum(Var<Scalar> x, Index axis);
template <typename Scalar>
Var<Scalar> reduce_mean(Var<Scalar> x, Index axis);
/// Maximum along an axis; the gradient goes to the first maximal element.
template <typename Scalar>
Var<Scalar> reduce_max(Var<Scalar> x, Index axis);

/// Sum of every element -> scalar.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x);

/// out.flat[i] = x.flat[indices[i]]
template <typename Scalar>
Var<Scalar> gather(Var<Scalar> x, std::vector<Index> indices, Shape out_shape);

/// Extent of a valid sliding window; throws ShapeError when not integral.
Index sliding_extent(Index input, Index window, Index stride, const char* what);

}  // namespace fkan
