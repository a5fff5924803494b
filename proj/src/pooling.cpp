#include "fkan/pooling.hpp"

namespace fkan {

MembershipParams::MembershipParams(double rmax) : r_max(rmax) {
  if (!(rmax > 0.0)) throw ConfigError("r_max must be positive");
  d = rmax / 2.0;
  c = d / 3.0;
  a = rmax / 4.0;
  m = rmax / 2.0;
  b = m + a;
  r = rmax / 2.0;
  q = r + rmax / 4.0;
}

const char* to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::kMax: return "max";
    case PoolKind::kAverage: return "avg";
    case PoolKind::kFuzzy: return "fuzzy";
  }
  return "?";
}

PoolKind parse_pool_kind(const std::string& name) {
  if (name == "max") return PoolKind::kMax;
  if (name == "avg" || name == "average") return PoolKind::kAverage;
  if (name == "fuzzy") return PoolKind::kFuzzy;
  throw ConfigError("unknown pooling kind '" + name + "'");
}

template <typename Scalar>
Var<Scalar> fuzzify(Var<Scalar> windows, const MembershipParams& params) {
  const Tensor<Scalar>& w = windows.value();
  if (w.rank() < 1) throw ShapeError("fuzzify: expected [..., k*k] windows");
  const Index kk = w.dim(w.rank() - 1);
  const Index count = w.size() / kk;
  Shape shape(w.shape().begin(), w.shape().end() - 1);
  shape.push_back(3);
  shape.push_back(kk);
  Tensor<Scalar> out(shape);
  for (Index n = 0; n < count; ++n)
    for (int v = 0; v < 3; ++v)
      for (Index i = 0; i < kk; ++i) out[(n * 3 + v) * kk + i] = membership(v + 1, w[n * kk + i], params);
  return windows.graph->record(std::move(out), {windows},
                               [windows, params, kk, count](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                                 const Tensor<Scalar>& wv = gr.value(windows);
                                 auto& gw = gr.grad(windows);
                                 for (Index n = 0; n < count; ++n)
                                   for (int v = 0; v < 3; ++v)
                                     for (Index i = 0; i < kk; ++i) {
                                       const Scalar g = go[(n * 3 + v) * kk + i];
                                       if (g != Scalar(0)) gw[n * kk + i] += g * membership_slope(v + 1, wv[n * kk + i], params);
                                     }
                               });
}

template <typename Scalar>
Var<Scalar> select_memberships(Var<Scalar> fuzzified) {
  const Tensor<Scalar>& f = fuzzified.value();
  if (f.rank() < 2 || f.dim(f.rank() - 2) != 3) throw ShapeError("select_memberships: expected [..., 3, k*k]");
  const Index kk = f.dim(f.rank() - 1);
  const Index count = f.size() / (3 * kk);
  Shape shape(f.shape().begin(), f.shape().end() - 2);
  shape.push_back(kk);
  std::vector<Index> indices;
  indices.reserve(static_cast<std::size_t>(count * kk));
  for (Index n = 0; n < count; ++n) {
    std::array<Scalar, 3> scores{};
    for (int v = 0; v < 3; ++v) {
      Scalar s = 0;
      for (Index i = 0; i < kk; ++i) s = algebraic_sum(s, f[(n * 3 + v) * kk + i]);
      scores[v] = s;
    }
    const Index best = argmax_score(scores);
    for (Index i = 0; i < kk; ++i) indices.push_back((n * 3 + best) * kk + i);
  }
  return gather(fuzzified, std::move(indices), std::move(shape));
}

template <typename Scalar>
Var<Scalar> defuzzify_cog(Var<Scalar> memberships, Var<Scalar> windows) {
  const Tensor<Scalar>& mu = memberships.value();
  const Tensor<Scalar>& w = windows.value();
  if (mu.shape() != w.shape() || w.rank() < 1) {
    throw ShapeError("defuzzify_cog: memberships " + to_string(mu.shape()) + " vs windows " + to_string(w.shape()));
  }
  const Index kk = w.dim(w.rank() - 1);
  const Index count = w.size() / kk;
  Tensor<Scalar> out(Shape(w.shape().begin(), w.shape().end() - 1));
  auto denominators = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(count));
  for (Index n = 0; n < count; ++n) {
    const Scalar* p = w.data() + n * kk;
    const Scalar* m = mu.data() + n * kk;
    Scalar num = 0, den = 0;
    for (Index i = 0; i < kk; ++i) {
      num += m[i] * p[i];
      den += m[i];
    }
    (*denominators)[static_cast<std::size_t>(n)] = den;
    if (den < Scalar(kCogEpsilon)) {
      Scalar total = 0;
      for (Index i = 0; i < kk; ++i) total += p[i];
      out[n] = total / static_cast<Scalar>(kk);
    } else {
      out[n] = num / den;
    }
  }
  return windows.graph->record(
      std::move(out), {memberships, windows},
      [memberships, windows, denominators, kk, count](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        const Tensor<Scalar>& mv = gr.value(memberships);
        const Tensor<Scalar>& wv = gr.value(windows);
        // The output value is recomputed from the node inputs.
        const bool gm = gr.requires_grad(memberships);
        const bool gw = gr.requires_grad(windows);
        Tensor<Scalar>* dm = gm ? &gr.grad(memberships) : nullptr;
        Tensor<Scalar>* dw = gw ? &gr.grad(windows) : nullptr;
        for (Index n = 0; n < count; ++n) {
          const Scalar g = go[n];
          const Scalar den = (*denominators)[static_cast<std::size_t>(n)];
          if (den < Scalar(kCogEpsilon)) {
            if (dw)
              for (Index i = 0; i < kk; ++i) (*dw)[n * kk + i] += g / static_cast<Scalar>(kk);
            continue;
          }
          Scalar num = 0;
          for (Index i = 0; i < kk; ++i) num += mv[n * kk + i] * wv[n * kk + i];
          const Scalar value = num / den;
          for (Index i = 0; i < kk; ++i) {
            if (dm) (*dm)[n * kk + i] += g * (wv[n * kk + i] - value) / den;
            if (dw) (*dw)[n * kk + i] += g * mv[n * kk + i] / den;
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> pool(Var<Scalar> input, const PoolConfig& config) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw ShapeError("pool: expected [N,C,H,W], got " + to_string(s));
  if (config.window < 1 || config.stride < 1) throw ConfigError("pool: window and stride must be >= 1");
  Var<Scalar> windows = extract_windows(input, config.window, config.stride);
  switch (config.kind) {
    case PoolKind::kMax: return reduce_max(windows, -1);
    case PoolKind::kAverage: return reduce_mean(windows, -1);
    case PoolKind::kFuzzy: {
      Var<Scalar> selected = select_memberships(fuzzify(windows, config.membership));
      return defuzzify_cog(selected, windows);
    }
  }
  throw ConfigError("pool: unknown kind");
}

#define FKAN_INSTANTIATE_POOLING(S)                                       \
  template Var<S> fuzzify<S>(Var<S>, const MembershipParams&);            \
  template Var<S> select_memberships<S>(Var<S>);                          \
  template Var<S> defuzzify_cog<S>(Var<S>, Var<S>);                       \
  template Var<S> pool<S>(Var<S>, const PoolConfig&);

FKAN_INSTANTIATE_POOLING(float)
FKAN_INSTANTIATE_POOLING(double)

}  // namespace fkan
