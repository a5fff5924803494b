#include "fkan/ops.hpp"

#include <algorithm>
#include <limits>

namespace fkan {

namespace {

bool g_debug_checks =
#ifdef NDEBUG
    false;
#else
    true;
#endif

}  // namespace

bool debug_checks() { return g_debug_checks; }
void set_debug_checks(bool enabled) { g_debug_checks = enabled; }

const char* to_string(Activation kind) {
  switch (kind) {
    case Activation::kRelu: return "relu";
    case Activation::kSilu: return "silu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "silu") return Activation::kSilu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

Index sliding_extent(Index input, Index window, Index stride, const char* what) {
  if (window < 1 || stride < 1 || input < window || (input - window) % stride != 0) {
    throw ShapeError(std::string(what) + ": window " + std::to_string(window) + " stride " +
                     std::to_string(stride) + " does not tile extent " + std::to_string(input));
  }
  return (input - window) / stride + 1;
}

namespace {

// C[m,n] (+)= A[m,k] * B[k,n], row-major. The inner loop runs over n so each
// C element accumulates its k products in sequence.
template <typename Scalar>
void gemm_accumulate(const Scalar* a, const Scalar* b, Scalar* c, Index m, Index k, Index n) {
  for (Index i = 0; i < m; ++i) {
    Scalar* crow = c + i * n;
    const Scalar* arow = a + i * k;
    for (Index p = 0; p < k; ++p) {
      const Scalar av = arow[p];
      if (av == Scalar(0)) continue;
      const Scalar* brow = b + p * n;
      for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dst[n,m] = src[m,n]
template <typename Scalar>
void transpose_into(const Scalar* src, Scalar* dst, Index m, Index n) {
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

template <typename Scalar>
void check_divisor(const Tensor<Scalar>& b) {
  if (!debug_checks()) return;
  Index singular = 0;
  Index first = -1;
  for (Index i = 0; i < b.size(); ++i) {
    if (std::abs(b[i]) < std::numeric_limits<Scalar>::epsilon()) {
      if (first < 0) first = i;
      ++singular;
    }
  }
  if (singular > 0) {
    throw NumericalError("division by near-zero at " + std::to_string(singular) + " position(s), first at " +
                         std::to_string(first));
  }
}

// [outer, axis, inner] decomposition of a shape around one axis.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
  Shape reduced;
};

AxisSplit split_axis(const Shape& shape, Index axis, const char* what) {
  if (axis < 0) axis += static_cast<Index>(shape.size());
  if (axis < 0 || axis >= static_cast<Index>(shape.size())) {
    throw ShapeError(std::string(what) + ": axis out of range for " + to_string(shape));
  }
  AxisSplit s;
  for (Index d = 0; d < static_cast<Index>(shape.size()); ++d) {
    if (d < axis) s.outer *= shape[d];
    if (d > axis) s.inner *= shape[d];
    if (d != axis) s.reduced.push_back(shape[d]);
  }
  s.extent = shape[axis];
  return s;
}

}  // namespace

template <typename Scalar>
Var<Scalar> elementwise(Elementwise op, Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.graph;
  const Tensor<Scalar>& x = a.value();
  const Tensor<Scalar>& y = b.value();
  require_same_shape(x.shape(), y.shape(), "elementwise");
  Tensor<Scalar> out(x.shape());
  switch (op) {
    case Elementwise::kAdd: out.array() = x.array() + y.array(); break;
    case Elementwise::kSub: out.array() = x.array() - y.array(); break;
    case Elementwise::kMul: out.array() = x.array() * y.array(); break;
    case Elementwise::kDiv:
      check_divisor(y);
      out.array() = x.array() / y.array();
      break;
  }
  return g.record(std::move(out), {a, b}, [op, a, b](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    const auto& xv = gr.value(a).array();
    const auto& yv = gr.value(b).array();
    const auto& d = go.array();
    const bool ga = gr.requires_grad(a);
    const bool gb = gr.requires_grad(b);
    switch (op) {
      case Elementwise::kAdd:
        if (ga) gr.grad(a).array() += d;
        if (gb) gr.grad(b).array() += d;
        break;
      case Elementwise::kSub:
        if (ga) gr.grad(a).array() += d;
        if (gb) gr.grad(b).array() -= d;
        break;
      case Elementwise::kMul:
        if (ga) gr.grad(a).array() += d * yv;
        if (gb) gr.grad(b).array() += d * xv;
        break;
      case Elementwise::kDiv:
        if (ga) gr.grad(a).array() += d / yv;
        if (gb) gr.grad(b).array() -= d * xv / (yv * yv);
        break;
    }
  });
}

template <typename Scalar>
Var<Scalar> elementwise(Elementwise op, Var<Scalar> a, Scalar b) {
  Graph<Scalar>& g = *a.graph;
  const Tensor<Scalar>& x = a.value();
  Tensor<Scalar> out(x.shape());
  switch (op) {
    case Elementwise::kAdd: out.array() = x.array() + b; break;
    case Elementwise::kSub: out.array() = x.array() - b; break;
    case Elementwise::kMul: out.array() = x.array() * b; break;
    case Elementwise::kDiv:
      check_divisor(Tensor<Scalar>::scalar(b));
      out.array() = x.array() / b;
      break;
  }
  return g.record(std::move(out), {a}, [op, a, b](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    auto& ga = gr.grad(a).array();
    switch (op) {
      case Elementwise::kAdd:
      case Elementwise::kSub: ga += go.array(); break;
      case Elementwise::kMul: ga += go.array() * b; break;
      case Elementwise::kDiv: ga += go.array() / b; break;
    }
  });
}

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  const Tensor<Scalar>& x = a.value();
  const Tensor<Scalar>& y = b.value();
  require_rank(x.shape(), 2, "matmul");
  require_rank(y.shape(), 2, "matmul");
  const Index m = x.dim(0), k = x.dim(1), n = y.dim(1);
  if (y.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + to_string(x.shape()) + " x " + to_string(y.shape()));
  }
  Tensor<Scalar> out({m, n});
  gemm_accumulate(x.data(), y.data(), out.data(), m, k, n);
  return a.graph->record(std::move(out), {a, b}, [a, b, m, k, n](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    const Tensor<Scalar>& xv = gr.value(a);
    const Tensor<Scalar>& yv = gr.value(b);
    if (gr.requires_grad(a)) {
      // dA = dOut * B^T
      std::vector<Scalar> bt(static_cast<std::size_t>(k * n));
      transpose_into(yv.data(), bt.data(), k, n);
      gemm_accumulate(go.data(), bt.data(), gr.grad(a).data(), m, n, k);
    }
    if (gr.requires_grad(b)) {
      // dB = A^T * dOut as a sum of row outer products.
      Scalar* db = gr.grad(b).data();
      for (Index i = 0; i < m; ++i) {
        const Scalar* grow = go.data() + i * n;
        for (Index p = 0; p < k; ++p) {
          const Scalar av = xv.data()[i * k + p];
          if (av == Scalar(0)) continue;
          Scalar* drow = db + p * n;
          for (Index j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  const Tensor<Scalar>& x = a.value();
  require_rank(x.shape(), 2, "transpose");
  const Index m = x.dim(0), n = x.dim(1);
  Tensor<Scalar> out({n, m});
  transpose_into(x.data(), out.data(), m, n);
  return a.graph->record(std::move(out), {a}, [a, m, n](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    Scalar* dst = gr.grad(a).data();
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) dst[i * n + j] += go.data()[j * m + i];
  });
}

template <typename Scalar>
Var<Scalar> add_bias(Var<Scalar> a, Var<Scalar> bias) {
  const Tensor<Scalar>& x = a.value();
  const Tensor<Scalar>& bv = bias.value();
  if (x.rank() < 1 || bv.rank() != 1 || bv.dim(0) != x.dim(x.rank() - 1)) {
    throw ShapeError("add_bias: bias " + to_string(bv.shape()) + " does not match trailing axis of " +
                     to_string(x.shape()));
  }
  const Index n = bv.dim(0);
  const Index rows = x.size() / n;
  Tensor<Scalar> out(x.shape());
  for (Index r = 0; r < rows; ++r) out.array().segment(r * n, n) = x.array().segment(r * n, n) + bv.array();
  return a.graph->record(std::move(out), {a, bias}, [a, bias, n, rows](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    if (gr.requires_grad(a)) gr.grad(a).array() += go.array();
    if (gr.requires_grad(bias)) {
      auto& gb = gr.grad(bias).array();
      for (Index r = 0; r < rows; ++r) gb += go.array().segment(r * n, n);
    }
  });
}

template <typename Scalar>
Var<Scalar> scale_last(Var<Scalar> a, Var<Scalar> s) {
  const Tensor<Scalar>& x = a.value();
  const Tensor<Scalar>& sv = s.value();
  Shape lead(x.shape().begin(), x.shape().end() - (x.rank() > 0 ? 1 : 0));
  if (x.rank() < 1 || lead != sv.shape()) {
    throw ShapeError("scale_last: scale " + to_string(sv.shape()) + " does not match leading axes of " +
                     to_string(x.shape()));
  }
  const Index n = x.dim(x.rank() - 1);
  const Index rows = sv.size();
  Tensor<Scalar> out(x.shape());
  for (Index r = 0; r < rows; ++r) out.array().segment(r * n, n) = x.array().segment(r * n, n) * sv[r];
  return a.graph->record(std::move(out), {a, s}, [a, s, n, rows](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    const Tensor<Scalar>& xv = gr.value(a);
    const Tensor<Scalar>& svv = gr.value(s);
    if (gr.requires_grad(a)) {
      auto& ga = gr.grad(a).array();
      for (Index r = 0; r < rows; ++r) ga.segment(r * n, n) += go.array().segment(r * n, n) * svv[r];
    }
    if (gr.requires_grad(s)) {
      auto& gs = gr.grad(s);
      for (Index r = 0; r < rows; ++r) {
        Scalar acc = 0;
        for (Index j = 0; j < n; ++j) acc += go[r * n + j] * xv[r * n + j];
        gs[r] += acc;
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernels, Var<Scalar> bias, Index stride) {
  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& w = kernels.value();
  const Tensor<Scalar>& bv = bias.value();
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d kernels");
  const Index batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const Index filters = w.dim(0), ksize = w.dim(2);
  if (w.dim(1) != channels || w.dim(3) != ksize) {
    throw ShapeError("conv2d: kernels " + to_string(w.shape()) + " incompatible with input " + to_string(x.shape()));
  }
  if (bv.rank() != 1 || bv.dim(0) != filters) throw ShapeError("conv2d: bias must have shape [" + std::to_string(filters) + "]");
  const Index out_h = sliding_extent(height, ksize, stride, "conv2d");
  const Index out_w = sliding_extent(width, ksize, stride, "conv2d");
  const Index patch = channels * ksize * ksize;
  const Index spatial = out_h * out_w;

  // im2col buffers are kept for the kernel gradient.
  auto cols = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(batch * patch * spatial));
  Tensor<Scalar> out({batch, filters, out_h, out_w});
  for (Index n = 0; n < batch; ++n) {
    Scalar* col = cols->data() + n * patch * spatial;
    for (Index c = 0; c < channels; ++c)
      for (Index u = 0; u < ksize; ++u)
        for (Index v = 0; v < ksize; ++v) {
          Scalar* row = col + ((c * ksize + u) * ksize + v) * spatial;
          const Scalar* plane = x.data() + (n * channels + c) * height * width;
          for (Index i = 0; i < out_h; ++i)
            for (Index j = 0; j < out_w; ++j) row[i * out_w + j] = plane[(i * stride + u) * width + j * stride + v];
        }
    Scalar* dst = out.data() + n * filters * spatial;
    gemm_accumulate(w.data(), col, dst, filters, patch, spatial);
    for (Index f = 0; f < filters; ++f) {
      Scalar* plane = dst + f * spatial;
      for (Index q = 0; q < spatial; ++q) plane[q] += bv[f];
    }
  }

  return input.graph->record(
      std::move(out), {input, kernels, bias},
      [=](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        const Tensor<Scalar>& wv = gr.value(kernels);
        if (gr.requires_grad(bias)) {
          auto& gb = gr.grad(bias);
          for (Index n = 0; n < batch; ++n)
            for (Index f = 0; f < filters; ++f) {
              const Scalar* g = go.data() + (n * filters + f) * spatial;
              Scalar acc = 0;
              for (Index q = 0; q < spatial; ++q) acc += g[q];
              gb[f] += acc;
            }
        }
        if (gr.requires_grad(kernels)) {
          Scalar* gw = gr.grad(kernels).data();
          for (Index n = 0; n < batch; ++n) {
            const Scalar* col = cols->data() + n * patch * spatial;
            const Scalar* g = go.data() + n * filters * spatial;
            for (Index f = 0; f < filters; ++f)
              for (Index p = 0; p < patch; ++p) {
                const Scalar* crow = col + p * spatial;
                const Scalar* grow = g + f * spatial;
                Scalar acc = 0;
                for (Index q = 0; q < spatial; ++q) acc += grow[q] * crow[q];
                gw[f * patch + p] += acc;
              }
          }
        }
        if (gr.requires_grad(input)) {
          Scalar* gx = gr.grad(input).data();
          std::vector<Scalar> wt(static_cast<std::size_t>(patch * filters));
          transpose_into(wv.data(), wt.data(), filters, patch);
          std::vector<Scalar> dcol(static_cast<std::size_t>(patch * spatial));
          for (Index n = 0; n < batch; ++n) {
            std::fill(dcol.begin(), dcol.end(), Scalar(0));
            gemm_accumulate(wt.data(), go.data() + n * filters * spatial, dcol.data(), patch, filters, spatial);
            for (Index c = 0; c < channels; ++c)
              for (Index u = 0; u < ksize; ++u)
                for (Index v = 0; v < ksize; ++v) {
                  const Scalar* row = dcol.data() + ((c * ksize + u) * ksize + v) * spatial;
                  Scalar* plane = gx + (n * channels + c) * height * width;
                  for (Index i = 0; i < out_h; ++i)
                    for (Index j = 0; j < out_w; ++j) plane[(i * stride + u) * width + j * stride + v] += row[i * out_w + j];
                }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> activate(Activation kind, Var<Scalar> x) {
  const Tensor<Scalar>& xv = x.value();
  Tensor<Scalar> out(xv.shape());
  switch (kind) {
    case Activation::kRelu: out.array() = xv.array().max(Scalar(0)); break;
    case Activation::kSilu: out.array() = xv.array().unaryExpr([](Scalar v) { return silu(v); }); break;
    case Activation::kTanh: out.array() = xv.array().tanh(); break;
  }
  return x.graph->record(std::move(out), {x}, [kind, x](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    const auto& v = gr.value(x).array();
    auto& gx = gr.grad(x).array();
    switch (kind) {
      case Activation::kRelu:
        gx += (v > Scalar(0)).select(go.array(), Scalar(0));
        break;
      case Activation::kSilu:
        gx += go.array() * v.unaryExpr([](Scalar t) { return silu_derivative(t); });
        break;
      case Activation::kTanh:
        gx += go.array() * (Scalar(1) - v.tanh().square());
        break;
    }
  });
}

template <typename Scalar>
Var<Scalar> softmax_cross_entropy(Var<Scalar> logits, std::span<const int> labels) {
  const Tensor<Scalar>& z = logits.value();
  require_rank(z.shape(), 2, "softmax_cross_entropy");
  const Index batch = z.dim(0), classes = z.dim(1);
  if (static_cast<Index>(labels.size()) != batch) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  auto probs = std::make_shared<Tensor<Scalar>>(z.shape());
  std::vector<int> label_copy(labels.begin(), labels.end());
  Scalar total = 0;
  for (Index n = 0; n < batch; ++n) {
    const int label = labels[static_cast<std::size_t>(n)];
    if (label < 0 || label >= classes) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const Scalar* row = z.data() + n * classes;
    Scalar peak = row[0];
    for (Index k = 1; k < classes; ++k) peak = std::max(peak, row[k]);
    Scalar denom = 0;
    for (Index k = 0; k < classes; ++k) denom += std::exp(row[k] - peak);
    const Scalar log_denom = std::log(denom);
    for (Index k = 0; k < classes; ++k) probs->data()[n * classes + k] = std::exp(row[k] - peak - log_denom);
    total += log_denom - (row[label] - peak);
  }
  Tensor<Scalar> out = Tensor<Scalar>::scalar(total / static_cast<Scalar>(batch));
  return logits.graph->record(
      std::move(out), {logits},
      [logits, probs, label_copy = std::move(label_copy), batch, classes](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        const Scalar scale = go[0] / static_cast<Scalar>(batch);
        auto& gz = gr.grad(logits);
        for (Index n = 0; n < batch; ++n)
          for (Index k = 0; k < classes; ++k) {
            const Scalar onehot = k == label_copy[static_cast<std::size_t>(n)] ? Scalar(1) : Scalar(0);
            gz[n * classes + k] += (probs->data()[n * classes + k] - onehot) * scale;
          }
      });
}

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape shape) {
  Tensor<Scalar> out = x.value().reshaped(std::move(shape));
  return x.graph->record(std::move(out), {x}, [x](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.grad(x).array() += go.array();
  });
}

template <typename Scalar>
Var<Scalar> flatten(Var<Scalar> x) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("flatten: scalar input");
  return reshape(x, Shape{s[0], x.value().size() / std::max<Index>(s[0], 1)});
}

template <typename Scalar>
Var<Scalar> zero_pad2d(Var<Scalar> x, Index pad) {
  const Tensor<Scalar>& xv = x.value();
  require_rank(xv.shape(), 4, "zero_pad2d");
  const Index planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const Index ph = h + 2 * pad, pw = w + 2 * pad;
  Tensor<Scalar> out({xv.dim(0), xv.dim(1), ph, pw});
  for (Index p = 0; p < planes; ++p)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) out[(p * ph + i + pad) * pw + j + pad] = xv[(p * h + i) * w + j];
  return x.graph->record(std::move(out), {x}, [=](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    auto& gx = gr.grad(x);
    for (Index p = 0; p < planes; ++p)
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) gx[(p * h + i) * w + j] += go[(p * ph + i + pad) * pw + j + pad];
  });
}

template <typename Scalar>
Var<Scalar> extract_windows(Var<Scalar> x, Index window, Index stride) {
  const Tensor<Scalar>& xv = x.value();
  require_rank(xv.shape(), 4, "extract_windows");
  const Index planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const Index oh = sliding_extent(h, window, stride, "extract_windows");
  const Index ow = sliding_extent(w, window, stride, "extract_windows");
  const Index kk = window * window;
  Tensor<Scalar> out({xv.dim(0), xv.dim(1), oh, ow, kk});
  // Source offset of every output element, shared by forward and backward.
  auto source = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(out.size()));
  Index o = 0;
  for (Index p = 0; p < planes; ++p)
    for (Index i = 0; i < oh; ++i)
      for (Index j = 0; j < ow; ++j)
        for (Index u = 0; u < window; ++u)
          for (Index v = 0; v < window; ++v, ++o) {
            const Index src = (p * h + i * stride + u) * w + j * stride + v;
            (*source)[static_cast<std::size_t>(o)] = src;
            out[o] = xv[src];
          }
  return x.graph->record(std::move(out), {x}, [x, source](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < source->size(); ++i) gx[(*source)[i]] += go[static_cast<Index>(i)];
  });
}

template <typename Scalar>
Var<Scalar> reduce_sum(Var<Scalar> x, Index axis) {
  const Tensor<Scalar>& xv = x.value();
  const AxisSplit s = split_axis(xv.shape(), axis, "reduce_sum");
  Tensor<Scalar> out(s.reduced);
  for (Index o = 0; o < s.outer; ++o)
    for (Index a = 0; a < s.extent; ++a)
      for (Index i = 0; i < s.inner; ++i) out[o * s.inner + i] += xv[(o * s.extent + a) * s.inner + i];
  return x.graph->record(std::move(out), {x}, [x, s](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    auto& gx = gr.grad(x);
    for (Index o = 0; o < s.outer; ++o)
      for (Index a = 0; a < s.extent; ++a)
        for (Index i = 0; i < s.inner; ++i) gx[(o * s.extent + a) * s.inner + i] += go[o * s.inner + i];
  });
}

template <typename Scalar>
Var<Scalar> reduce_mean(Var<Scalar> x, Index axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "reduce_mean");
  Var<Scalar> total = reduce_sum(x, axis);
  const Tensor<Scalar>& tv = total.value();
  Tensor<Scalar> out(tv.shape());
  const Scalar count = static_cast<Scalar>(s.extent);
  out.array() = tv.array() / count;
  return x.graph->record(std::move(out), {total}, [total, count](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.grad(total).array() += go.array() / count;
  });
}

template <typename Scalar>
Var<Scalar> reduce_max(Var<Scalar> x, Index axis) {
  const Tensor<Scalar>& xv = x.value();
  const AxisSplit s = split_axis(xv.shape(), axis, "reduce_max");
  if (s.extent == 0) throw ShapeError("reduce_max: empty axis");
  Tensor<Scalar> out(s.reduced);
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(out.size()));
  for (Index o = 0; o < s.outer; ++o)
    for (Index i = 0; i < s.inner; ++i) {
      Index best = o * s.extent * s.inner + i;
      for (Index a = 1; a < s.extent; ++a) {
        const Index idx = (o * s.extent + a) * s.inner + i;
        if (xv[idx] > xv[best]) best = idx;
      }
      out[o * s.inner + i] = xv[best];
      (*argmax)[static_cast<std::size_t>(o * s.inner + i)] = best;
    }
  return x.graph->record(std::move(out), {x}, [x, argmax](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += go[static_cast<Index>(i)];
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  const Tensor<Scalar>& xv = x.value();
  Scalar acc = 0;
  for (Index i = 0; i < xv.size(); ++i) acc += xv[i];
  return x.graph->record(Tensor<Scalar>::scalar(acc), {x}, [x](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.grad(x).array() += go[0];
  });
}

template <typename Scalar>
Var<Scalar> gather(Var<Scalar> x, std::vector<Index> indices, Shape out_shape) {
  const Tensor<Scalar>& xv = x.value();
  if (numel(out_shape) != static_cast<Index>(indices.size())) {
    throw ShapeError("gather: " + std::to_string(indices.size()) + " indices for output shape " + to_string(out_shape));
  }
  Tensor<Scalar> out(std::move(out_shape));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index src = indices[i];
    if (src < 0 || src >= xv.size()) throw ShapeError("gather: index " + std::to_string(src) + " out of range");
    out[static_cast<Index>(i)] = xv[src];
  }
  auto idx = std::make_shared<std::vector<Index>>(std::move(indices));
  return x.graph->record(std::move(out), {x}, [x, idx](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += go[static_cast<Index>(i)];
  });
}

#define FKAN_INSTANTIATE_OPS(S)                                                        \
  template Var<S> elementwise<S>(Elementwise, Var<S>, Var<S>);                         \
  template Var<S> elementwise<S>(Elementwise, Var<S>, S);                              \
  template Var<S> matmul<S>(Var<S>, Var<S>);                                           \
  template Var<S> transpose<S>(Var<S>);                                                \
  template Var<S> add_bias<S>(Var<S>, Var<S>);                                         \
  template Var<S> scale_last<S>(Var<S>, Var<S>);                                       \
  template Var<S> conv2d<S>(Var<S>, Var<S>, Var<S>, Index);                            \
  template Var<S> activate<S>(Activation, Var<S>);                                     \
  template Var<S> softmax_cross_entropy<S>(Var<S>, std::span<const int>);              \
  template Var<S> reshape<S>(Var<S>, Shape);                                           \
  template Var<S> flatten<S>(Var<S>);                                                  \
  template Var<S> zero_pad2d<S>(Var<S>, Index);                                        \
  template Var<S> extract_windows<S>(Var<S>, Index, Index);                            \
  template Var<S> reduce_sum<S>(Var<S>, Index);                                        \
  template Var<S> reduce_mean<S>(Var<S>, Index);                                       \
  template Var<S> reduce_max<S>(Var<S>, Index);                                        \
  template Var<S> sum<S>(Var<S>);                                                      \
  template Var<S> gather<S>(Var<S>, std::vector<Index>, Shape);

FKAN_INSTANTIATE_OPS(float)
FKAN_INSTANTIATE_OPS(double)

}  // namespace fkan
