#pragma once

// Reference implementations and verification harnesses. Nothing in the core
// library depends on this target; the oracles here are written directly from
// the defining formulas and share no code with the vectorized paths.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fkan/model.hpp"

namespace fkan::diagnostics {

// Oracles ---------------------------------------------------------------

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b);

/// out[n,f,i,j] = (sum over c,u,v in row-major order) + bias[f].
Tensor<double> naive_conv2d(const Tensor<double>& input, const Tensor<double>& kernels, const Tensor<double>& bias,
                            Index stride);

/// Triangular memberships as clamped ramps.
double reference_membership(int v, double x, double r_max);

double reference_fuzzy_window(std::span<const double> patch, double r_max);

/// Window-by-window pooling of [N,C,H,W].
Tensor<double> reference_pool(const Tensor<double>& input, PoolKind kind, Index window, Index stride, double r_max);

/// Textbook Cox-de Boor recursion for B_{i,degree}(x), 0/0 taken as 0.
double reference_bspline(int i, int degree, double x, const std::vector<double>& knots);

/// Extended-precision mean cross-entropy.
long double reference_cross_entropy(const Tensor<double>& logits, std::span<const int> labels);

// Gradient checking -------------------------------------------------------

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor of the relative error, so that gradients below it are
  /// compared in absolute terms.
  double floor = 1e-6;
  Index max_per_tensor = 0;  // 0 checks every element
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  Index checked = 0;
  std::string worst;

  bool passed(double tolerance = 1e-4) const { return checked > 0 && max_rel_error < tolerance; }
};

using LossBuilder = std::function<Var<double>(Graph<double>&)>;

/// Compares backward() against central differences for every target the
/// builder binds with Graph::parameter().
GradCheckReport check_gradients(std::span<Parameter<double>* const> targets, const LossBuilder& loss,
                                const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

/// Smallest distance of any traced intermediate from a non-differentiable
/// point: ReLU at 0, membership breakpoints, max-pool and fuzzy-score ties.
double kink_distance(const ForwardTrace<double>& trace, const ModelConfig& config);

Tensor<double> random_tensor(Shape shape, double lo, double hi, std::mt19937_64& rng);

/// Tiny LeNet variant: 8x8 single-channel input, two conv stages of two filters.
ModelConfig tiny_config(PoolKind pooling, HeadKind head);

// Suites ------------------------------------------------------------------

struct SuiteReport {
  std::string name;
  bool passed = true;
  double worst = 0;
  std::vector<std::string> lines;

  void record(const std::string& label, bool ok, double value);
};

/// Finite-difference checks for every layer and the tiny composite models.
SuiteReport run_gradient_suite(std::uint64_t seed = 7);

/// Vectorized pooling vs window-by-window oracle, exact equality.
SuiteReport run_pool_oracle_suite(std::uint64_t seed = 11, Index windows = 1000);

/// Partition of unity, non-negativity, recursion agreement, KAN linearity.
SuiteReport run_spline_suite(std::uint64_t seed = 13);

}  // namespace fkan::diagnostics
