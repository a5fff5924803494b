#include "fkan/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace fkan::diagnostics {

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) throw ShapeError("naive_matmul: bad shapes");
  Tensor<double> out({a.dim(0), b.dim(1)});
  for (Index i = 0; i < a.dim(0); ++i)
    for (Index j = 0; j < b.dim(1); ++j) {
      double s = 0;
      for (Index p = 0; p < a.dim(1); ++p) s += a.at(i, p) * b.at(p, j);
      out.at(i, j) = s;
    }
  return out;
}

Tensor<double> naive_conv2d(const Tensor<double>& input, const Tensor<double>& kernels, const Tensor<double>& bias,
                            Index stride) {
  const Index n_count = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index filters = kernels.dim(0), k = kernels.dim(2);
  const Index oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  Tensor<double> out({n_count, filters, oh, ow});
  for (Index n = 0; n < n_count; ++n)
    for (Index f = 0; f < filters; ++f)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          double s = 0;
          for (Index c = 0; c < channels; ++c)
            for (Index u = 0; u < k; ++u)
              for (Index v = 0; v < k; ++v) s += input.at(n, c, i * stride + u, j * stride + v) * kernels.at(f, c, u, v);
          out.at(n, f, i, j) = s + bias[f];
        }
  return out;
}

double reference_membership(int v, double x, double r_max) {
  const double d = r_max / 2, c = d / 3;
  const double a = r_max / 4, m = r_max / 2, b = m + a;
  const double r = r_max / 2, q = r + r_max / 4;
  switch (v) {
    case 1: return std::clamp((d - x) / (d - c), 0.0, 1.0);
    case 2: return std::max(0.0, std::min((x - a) / (m - a), (b - x) / (b - m)));
    case 3: return std::clamp((x - r) / (q - r), 0.0, 1.0);
    default: throw ConfigError("reference_membership: v must be 1..3");
  }
}

double reference_fuzzy_window(std::span<const double> patch, double r_max) {
  double best_score = -1;
  std::vector<double> chosen;
  for (int v = 1; v <= 3; ++v) {
    std::vector<double> mu;
    double score = 0;
    for (double x : patch) {
      mu.push_back(reference_membership(v, x, r_max));
      score = score + mu.back() * (1.0 - score);
    }
    if (score > best_score) {
      best_score = score;
      chosen = mu;
    }
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < patch.size(); ++i) {
    num += chosen[i] * patch[i];
    den += chosen[i];
  }
  if (den < 1e-12) {
    double total = 0;
    for (double x : patch) total += x;
    return total / static_cast<double>(patch.size());
  }
  return num / den;
}

Tensor<double> reference_pool(const Tensor<double>& input, PoolKind kind, Index window, Index stride, double r_max) {
  const Index n_count = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor<double> out({n_count, channels, oh, ow});
  std::vector<double> patch;
  for (Index n = 0; n < n_count; ++n)
    for (Index c = 0; c < channels; ++c)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          patch.clear();
          for (Index u = 0; u < window; ++u)
            for (Index v = 0; v < window; ++v) patch.push_back(input.at(n, c, i * stride + u, j * stride + v));
          double value = 0;
          switch (kind) {
            case PoolKind::kMax:
              value = patch[0];
              for (double x : patch) value = x > value ? x : value;
              break;
            case PoolKind::kAverage: {
              double s = 0;
              for (double x : patch) s += x;
              value = s / static_cast<double>(patch.size());
              break;
            }
            case PoolKind::kFuzzy: value = reference_fuzzy_window(patch, r_max); break;
          }
          out.at(n, c, i, j) = value;
        }
  return out;
}

double reference_bspline(int i, int degree, double x, const std::vector<double>& t) {
  if (degree == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  double left = 0, right = 0;
  const double dl = t[i + degree] - t[i];
  const double dr = t[i + degree + 1] - t[i + 1];
  if (dl != 0) left = (x - t[i]) / dl * reference_bspline(i, degree - 1, x, t);
  if (dr != 0) right = (t[i + degree + 1] - x) / dr * reference_bspline(i + 1, degree - 1, x, t);
  return left + right;
}

long double reference_cross_entropy(const Tensor<double>& logits, std::span<const int> labels) {
  const Index n = logits.dim(0), k = logits.dim(1);
  long double total = 0;
  for (Index i = 0; i < n; ++i) {
    long double peak = logits.at(i, 0);
    for (Index c = 1; c < k; ++c) peak = std::max<long double>(peak, logits.at(i, c));
    long double denom = 0;
    for (Index c = 0; c < k; ++c) denom += std::exp(static_cast<long double>(logits.at(i, c)) - peak);
    total += std::log(denom) + peak - static_cast<long double>(logits.at(i, labels[static_cast<std::size_t>(i)]));
  }
  return total / static_cast<long double>(n);
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckReport check_gradients(std::span<Parameter<double>* const> targets, const LossBuilder& loss,
                                const GradCheckOptions& options) {
  for (Parameter<double>* p : targets) p->zero_grad();
  {
    Graph<double> g;
    g.backward(loss(g));
  }
  auto evaluate = [&] {
    Graph<double> g(false);
    return loss(g).value().item();
  };

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (Parameter<double>* p : targets) {
    std::vector<Index> elements(static_cast<std::size_t>(p->value.size()));
    for (Index i = 0; i < p->value.size(); ++i) elements[static_cast<std::size_t>(i)] = i;
    if (options.max_per_tensor > 0 && p->value.size() > options.max_per_tensor) {
      std::shuffle(elements.begin(), elements.end(), rng);
      elements.resize(static_cast<std::size_t>(options.max_per_tensor));
    }
    for (Index e : elements) {
      const double saved = p->value[e];
      p->value[e] = saved + options.step;
      const double up = evaluate();
      p->value[e] = saved - options.step;
      const double down = evaluate();
      p->value[e] = saved;
      const double numeric = (up - down) / (2 * options.step);
      const double analytic = p->grad[e];
      const double err = relative_error(analytic, numeric, options.floor);
      ++report.checked;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s[%lld]: analytic %.10g numeric %.10g", p->name.c_str(),
                      static_cast<long long>(e), analytic, numeric);
        if (err >= report.max_rel_error) report.worst = buf;
      }
    }
  }
  return report;
}

double kink_distance(const ForwardTrace<double>& trace, const ModelConfig& config) {
  double dist = std::numeric_limits<double>::infinity();
  const bool relu = config.conv_activation == Activation::kRelu;
  if (relu) {
    for (const auto& v : trace.conv_outputs)
      for (double x : v.value().span()) dist = std::min(dist, std::abs(x));
    for (const auto& v : trace.dense_preactivations)
      for (double x : v.value().span()) dist = std::min(dist, std::abs(x));
  }
  const Index k = config.pooling.window, s = config.pooling.stride;
  const MembershipParams& mp = config.pooling.membership;
  for (const auto& var : trace.pool_inputs) {
    const Tensor<double>& t = var.value();
    const Index planes = t.dim(0) * t.dim(1), h = t.dim(2), w = t.dim(3);
    const Index oh = (h - k) / s + 1, ow = (w - k) / s + 1;
    std::vector<double> patch;
    for (Index p = 0; p < planes; ++p)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          patch.clear();
          for (Index u = 0; u < k; ++u)
            for (Index v = 0; v < k; ++v) patch.push_back(t[(p * h + i * s + u) * w + j * s + v]);
          if (config.pooling.kind == PoolKind::kMax) {
            std::vector<double> sorted = patch;
            std::sort(sorted.rbegin(), sorted.rend());
            // Ties among ReLU-clamped zeros stay tied under small perturbations.
            if (sorted.size() > 1 && !(relu && sorted[0] == 0.0)) dist = std::min(dist, sorted[0] - sorted[1]);
          } else if (config.pooling.kind == PoolKind::kFuzzy) {
            for (double x : patch)
              for (double bp : mp.breakpoints()) dist = std::min(dist, std::abs(x - bp));
            std::array<double, 3> scores{};
            for (int v = 1; v <= 3; ++v) {
              double sc = 0;
              for (double x : patch) sc = sc + reference_membership(v, x, mp.r_max) * (1.0 - sc);
              scores[v - 1] = sc;
            }
            std::sort(scores.rbegin(), scores.rend());
            if (!(scores[0] == 1.0 && scores[1] == 1.0)) dist = std::min(dist, scores[0] - scores[1]);
          }
        }
  }
  return dist;
}

Tensor<double> random_tensor(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

ModelConfig tiny_config(PoolKind pooling, HeadKind head) {
  ModelConfig cfg;
  cfg.dataset = DatasetId::kMnist;
  cfg.pooling.kind = pooling;
  cfg.head = head;
  cfg.input_size = 8;
  cfg.conv_filters = {2, 2};
  cfg.conv_kernels = {3, 2};
  cfg.mlp_widths = {4};
  cfg.kan_widths = {3};
  return cfg;
}

void SuiteReport::record(const std::string& label, bool ok, double value) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-4s %-44s %.3e", ok ? "ok" : "FAIL", label.c_str(), value);
  lines.emplace_back(buf);
  passed = passed && ok;
  worst = std::max(worst, value);
}

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kKinkMargin = 1e-3;

// Redraws elements that fall within the margin of any of the given points.
void push_away(Tensor<double>& t, std::span<const double> points, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (Index i = 0; i < t.size(); ++i) {
    auto near = [&](double x) {
      for (double p : points)
        if (std::abs(x - p) < kKinkMargin) return true;
      return false;
    };
    while (near(t[i])) t[i] = u(rng);
  }
}

// Redraws whole k*k windows (stride k) until the fuzzy scores have a clear
// winner or the max has a clear gap.
void separate_windows(Tensor<double>& t, PoolKind kind, Index k, double lo, double hi, std::mt19937_64& rng) {
  const MembershipParams mp;
  const auto bps = mp.breakpoints();
  const Index planes = t.dim(0) * t.dim(1), h = t.dim(2), w = t.dim(3);
  std::uniform_real_distribution<double> u(lo, hi);
  for (Index p = 0; p < planes; ++p)
    for (Index i = 0; i < h / k; ++i)
      for (Index j = 0; j < w / k; ++j) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
          std::vector<double> patch;
          for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b) patch.push_back(t[(p * h + i * k + a) * w + j * k + b]);
          bool ok = true;
          if (kind == PoolKind::kMax) {
            std::sort(patch.rbegin(), patch.rend());
            ok = patch[0] - patch[1] >= kKinkMargin;
          } else if (kind == PoolKind::kFuzzy) {
            std::array<double, 3> sc{};
            for (int v = 1; v <= 3; ++v)
              for (double x : patch) sc[v - 1] = sc[v - 1] + reference_membership(v, x, mp.r_max) * (1.0 - sc[v - 1]);
            std::sort(sc.rbegin(), sc.rend());
            ok = sc[0] - sc[1] >= kKinkMargin || (sc[0] == 1.0 && sc[1] == 1.0);
            for (double x : patch)
              for (double bp : bps) ok = ok && std::abs(x - bp) >= kKinkMargin;
          }
          if (ok) break;
          for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b) t[(p * h + i * k + a) * w + j * k + b] = u(rng);
        }
      }
}

// Weighted sum of the output with fixed random weights turns any op into a
// scalar loss whose gradient exercises every output element.
Var<double> weighted_sum(Var<double> out, const Tensor<double>& weights) {
  Graph<double>& g = *out.graph;
  return sum(mul(out, g.input(weights)));
}

void grad_case(SuiteReport& suite, const std::string& label, std::vector<Parameter<double>*> targets,
               const LossBuilder& loss, Index max_per_tensor = 0) {
  GradCheckOptions opts;
  opts.max_per_tensor = max_per_tensor;
  const GradCheckReport r = check_gradients(targets, loss, opts);
  suite.record(label + " (" + std::to_string(r.checked) + " elems)", r.passed(kGradTolerance), r.max_rel_error);
  if (!r.passed(kGradTolerance)) suite.lines.push_back("     worst: " + r.worst);
}

// Re-initialises conv kernels so activations reach every membership set, then
// looks for an input batch whose traced intermediates keep clear of kinks.
bool prepare_model_case(Model<double>& model, Parameter<double>& input, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 500; ++attempt) {
    for (Parameter<double>* p : model.parameters()) {
      if (p->name.rfind("conv", 0) == 0) p->value = random_tensor(p->value.shape(), -0.9, 0.9, rng);
    }
    input.value = random_tensor(input.value.shape(), 0.0, 2.0, rng);
    Graph<double> g(false);
    ForwardTrace<double> trace;
    model.forward(g.input(input.value), &trace);
    if (kink_distance(trace, model.config()) >= kKinkMargin) return true;
  }
  return false;
}

}  // namespace

SuiteReport run_gradient_suite(std::uint64_t seed) {
  SuiteReport suite{"grad"};
  std::mt19937_64 rng(seed);

  {
    Parameter<double> a("a", random_tensor({3, 4}, -2, 2, rng)), b("b", random_tensor({3, 4}, -2, 2, rng));
    b.value.array() = b.value.array().sign() * (b.value.array().abs() + 0.5);
    const Tensor<double> w = random_tensor({3, 4}, -1, 1, rng);
    std::vector<Parameter<double>*> ts{&a, &b};
    grad_case(suite, "elementwise add/sub/mul/div", ts, [&](Graph<double>& g) {
      Var<double> x = g.parameter(a), y = g.parameter(b);
      return weighted_sum(div(mul(add(x, y), sub(x, y)), y), w);
    });
  }
  {
    Parameter<double> a("a", random_tensor({5, 7}, -2, 2, rng)), b("b", random_tensor({7, 3}, -2, 2, rng)),
        bias("bias", random_tensor({3}, -2, 2, rng));
    const Tensor<double> w = random_tensor({5, 3}, -1, 1, rng);
    std::vector<Parameter<double>*> ts{&a, &b, &bias};
    grad_case(suite, "matmul + bias", ts, [&](Graph<double>& g) {
      return weighted_sum(add_bias(matmul(g.parameter(a), g.parameter(b)), g.parameter(bias)), w);
    });
  }
  {
    Parameter<double> x("x", random_tensor({2, 3, 8, 8}, -2, 2, rng)), k("k", random_tensor({4, 3, 3, 3}, -2, 2, rng)),
        bias("bias", random_tensor({4}, -2, 2, rng));
    const Tensor<double> w = random_tensor({2, 4, 6, 6}, -1, 1, rng);
    const Tensor<double> w2 = random_tensor({2, 4, 3, 3}, -1, 1, rng);
    std::vector<Parameter<double>*> ts{&x, &k, &bias};
    grad_case(suite, "conv2d stride 1", ts, [&](Graph<double>& g) {
      return weighted_sum(conv2d(g.parameter(x), g.parameter(k), g.parameter(bias), 1), w);
    });
    Parameter<double> x2("x", random_tensor({2, 3, 7, 7}, -2, 2, rng));
    std::vector<Parameter<double>*> ts2{&x2, &k, &bias};
    grad_case(suite, "conv2d stride 2", ts2, [&](Graph<double>& g) {
      return weighted_sum(conv2d(g.parameter(x2), g.parameter(k), g.parameter(bias), 2), w2);
    });
  }
  for (Activation act : {Activation::kRelu, Activation::kSilu, Activation::kTanh}) {
    Parameter<double> x("x", random_tensor({4, 5}, -2, 2, rng));
    const double zero = 0.0;
    push_away(x.value, std::span<const double>(&zero, 1), -2, 2, rng);
    const Tensor<double> w = random_tensor({4, 5}, -1, 1, rng);
    std::vector<Parameter<double>*> ts{&x};
    grad_case(suite, std::string("activation ") + to_string(act), ts,
              [&](Graph<double>& g) { return weighted_sum(activate(act, g.parameter(x)), w); });
  }
  {
    Parameter<double> z("logits", random_tensor({4, 10}, -2, 2, rng));
    const std::vector<int> labels{3, 0, 9, 5};
    std::vector<Parameter<double>*> ts{&z};
    grad_case(suite, "softmax cross-entropy", ts,
              [&](Graph<double>& g) { return softmax_cross_entropy(g.parameter(z), std::span<const int>(labels)); });
  }
  for (PoolKind kind : {PoolKind::kMax, PoolKind::kAverage, PoolKind::kFuzzy}) {
    const double lo = kind == PoolKind::kFuzzy ? -1.0 : -2.0;
    const double hi = kind == PoolKind::kFuzzy ? 8.0 : 2.0;
    Parameter<double> x("x", random_tensor({2, 3, 6, 6}, lo, hi, rng));
    separate_windows(x.value, kind, 2, lo, hi, rng);
    const Tensor<double> w = random_tensor({2, 3, 3, 3}, -1, 1, rng);
    PoolConfig cfg;
    cfg.kind = kind;
    std::vector<Parameter<double>*> ts{&x};
    grad_case(suite, std::string("pool ") + to_string(kind), ts,
              [&](Graph<double>& g) { return weighted_sum(pool(g.parameter(x), cfg), w); });
  }
  {
    SplineGrid grid;
    KanLayer<double> layer = kan_init<double>(4, 3, grid, rng);
    layer.w_base.value = random_tensor({3, 4}, -1, 1, rng);
    layer.w_spline.value = random_tensor({3, 4}, -1, 1, rng);
    Parameter<double> x("x", random_tensor({5, 4}, -1.4, 1.4, rng));
    const Tensor<double> w = random_tensor({5, 3}, -1, 1, rng);
    std::vector<Parameter<double>*> ts{&x, &layer.coeffs, &layer.w_base, &layer.w_spline};
    grad_case(suite, "KAN layer", ts,
              [&](Graph<double>& g) { return weighted_sum(kan_layer_forward(g.parameter(x), layer), w); });

    std::vector<KanLayer<double>> stack;
    stack.push_back(kan_init<double>(4, 3, grid, rng));
    stack.push_back(kan_init<double>(3, 2, grid, rng));
    for (auto& l : stack) l.coeffs.value = random_tensor(l.coeffs.value.shape(), -1, 1, rng);
    const Tensor<double> w2 = random_tensor({5, 2}, -1, 1, rng);
    std::vector<Parameter<double>*> ts2{&x};
    for (auto& l : stack) {
      ts2.push_back(&l.coeffs);
      ts2.push_back(&l.w_base);
      ts2.push_back(&l.w_spline);
    }
    grad_case(suite, "KAN two-layer stack", ts2, [&](Graph<double>& g) {
      return weighted_sum(kan_stack_forward(g.parameter(x), std::span<KanLayer<double>>(stack)), w2);
    });
  }

  for (HeadKind head : {HeadKind::kMlp, HeadKind::kKan}) {
    for (PoolKind kind : {PoolKind::kMax, PoolKind::kAverage, PoolKind::kFuzzy}) {
      Model<double> model(tiny_config(kind, head));
      Parameter<double> input("input", Tensor<double>::zeros({2, 1, 8, 8}));
      const std::string label = std::string("tiny LeNet ") + to_string(kind) + "+" + to_string(head);
      if (!prepare_model_case(model, input, rng)) {
        suite.record(label + " (no kink-free sample)", false, 1.0);
        continue;
      }
      const std::vector<int> labels{1, 7};
      std::vector<Parameter<double>*> ts = model.parameters();
      ts.push_back(&input);
      grad_case(suite, label, ts, [&](Graph<double>& g) {
        return softmax_cross_entropy(model.forward(g.parameter(input)), std::span<const int>(labels));
      });
    }
  }
  return suite;
}

SuiteReport run_pool_oracle_suite(std::uint64_t seed, Index windows) {
  SuiteReport suite{"pool-oracle"};
  std::mt19937_64 rng(seed);
  auto compare = [&](const std::string& label, const Tensor<double>& input, PoolKind kind, Index k, Index s) {
    PoolConfig cfg;
    cfg.kind = kind;
    cfg.window = k;
    cfg.stride = s;
    Graph<double> g(false);
    const Tensor<double> fast = pool(g.input(input), cfg).value();
    const Tensor<double> slow = reference_pool(input, kind, k, s, cfg.membership.r_max);
    const double diff = fast.shape() == slow.shape() ? (fast.array() - slow.array()).abs().maxCoeff()
                                                     : std::numeric_limits<double>::infinity();
    suite.record(label, fast == slow, diff);
  };

  const Tensor<double> worked({1, 1, 2, 2}, {2.0, 2.5, 3.5, 4.0});
  compare("worked example [[2,2.5],[3.5,4]]", worked, PoolKind::kFuzzy, 2, 2);
  {
    Graph<double> g(false);
    PoolConfig cfg;
    cfg.kind = PoolKind::kFuzzy;
    const double v = pool(g.input(worked), cfg).value()[0];
    suite.record("worked example == 3.0", v == 3.0, std::abs(v - 3.0));
  }

  // `windows` independent 2x2 windows laid out as channels.
  const Tensor<double> many = random_tensor({1, windows, 2, 2}, -1.0, 8.0, rng);
  compare(std::to_string(windows) + " random fuzzy windows", many, PoolKind::kFuzzy, 2, 2);

  for (PoolKind kind : {PoolKind::kMax, PoolKind::kAverage, PoolKind::kFuzzy}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::uniform_int_distribution<Index> n(1, 2), c(1, 4);
      const Index side = 2 * std::uniform_int_distribution<Index>(1, 4)(rng);
      const Tensor<double> input = random_tensor({n(rng), c(rng), side, side}, -1.0, 8.0, rng);
      compare(std::string(to_string(kind)) + " k2s2 " + to_string(input.shape()), input, kind, 2, 2);
    }
    const Tensor<double> overlap = random_tensor({2, 4, 7, 7}, -1.0, 8.0, rng);
    compare(std::string(to_string(kind)) + " k3s2 overlapping", overlap, kind, 3, 2);
  }
  return suite;
}

SuiteReport run_spline_suite(std::uint64_t seed) {
  SuiteReport suite{"spline"};
  std::mt19937_64 rng(seed);
  for (int order = 0; order <= 4; ++order) {
    for (int intervals : {1, 3, 5, 8}) {
      SplineGrid grid{order, intervals, -1.0, 1.0};
      const std::vector<double> knots = grid.knots();
      double unity = 0, negative = 0, recursion = 0;
      const int samples = 2001;
      for (int s = 0; s < samples; ++s) {
        double x = grid.lo + (grid.hi - grid.lo) * s / (samples - 1);
        // Degree-0 indicators are half-open, so the right end lies outside.
        if (order == 0 && s == samples - 1) x = std::nextafter(grid.hi, grid.lo);
        const std::vector<double> basis = bspline_basis(x, grid);
        double total = 0;
        for (int i = 0; i < grid.basis_count(); ++i) {
          total += basis[i];
          negative = std::max(negative, -basis[i]);
          recursion = std::max(recursion, std::abs(basis[i] - reference_bspline(i, order, x, knots)));
        }
        unity = std::max(unity, std::abs(total - 1.0));
      }
      const std::string tag = "order " + std::to_string(order) + " G=" + std::to_string(intervals);
      suite.record(tag + " partition of unity", unity < 1e-9, unity);
      suite.record(tag + " non-negative", negative == 0.0, negative);
      suite.record(tag + " vs recursion", recursion < 1e-12, recursion);
    }
  }

  // Output is linear in (w_base, w_spline) and in (w_base, coeffs).
  SplineGrid grid;
  KanLayer<double> layer = kan_init<double>(6, 4, grid, rng);
  layer.w_base.value = random_tensor({4, 6}, -1, 1, rng);
  layer.w_spline.value = random_tensor({4, 6}, -1, 1, rng);
  const Tensor<double> x = random_tensor({8, 6}, -1.2, 1.2, rng);
  auto run = [&] {
    Graph<double> g(false);
    return kan_layer_forward(g.input(x), layer).value();
  };
  const Tensor<double> base = run();
  layer.w_base.value.array() *= 2.0;
  layer.w_spline.value.array() *= 2.0;
  const Tensor<double> doubled_weights = run();
  layer.w_spline.value.array() /= 2.0;
  layer.coeffs.value.array() *= 2.0;
  const Tensor<double> doubled_coeffs = run();
  const double e1 = (doubled_weights.array() - 2.0 * base.array()).abs().maxCoeff();
  const double e2 = (doubled_coeffs.array() - 2.0 * base.array()).abs().maxCoeff();
  suite.record("KAN linear in (w_base, w_spline)", e1 == 0.0, e1);
  suite.record("KAN linear in (w_base, coeffs)", e2 == 0.0, e2);
  return suite;
}

}  // namespace fkan::diagnostics
