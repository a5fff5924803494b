#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "fkan/ops.hpp"

namespace fkan {

/// Breakpoints of the three triangular membership functions, all derived
/// from the upper activation reference r_max.
struct MembershipParams {
  double r_max = 6.0;
  double d = 3.0;    // mu1 falls to zero at d
  double c = 1.0;    // mu1 saturates below c
  double a = 1.5;    // mu2 support starts at a
  double m = 3.0;    // mu2 apex
  double b = 4.5;    // mu2 support ends at b
  double r = 3.0;    // mu3 rises from r
  double q = 4.5;    // mu3 saturates above q

  MembershipParams() = default;
  explicit MembershipParams(double rmax);

  std::array<double, 7> breakpoints() const { return {c, d, a, m, b, r, q}; }
};

enum class PoolKind { kMax, kAverage, kFuzzy };

const char* to_string(PoolKind kind);
PoolKind parse_pool_kind(const std::string& name);

struct PoolConfig {
  PoolKind kind = PoolKind::kMax;
  Index window = 2;
  Index stride = 2;
  MembershipParams membership;
};

/// Value of membership function v (1, 2 or 3) at x.
template <typename Scalar>
Scalar membership(int v, Scalar x, const MembershipParams& p) {
  const Scalar c = Scalar(p.c), d = Scalar(p.d), a = Scalar(p.a), m = Scalar(p.m), b = Scalar(p.b), r = Scalar(p.r),
               q = Scalar(p.q);
  switch (v) {
    case 1:
      if (x > d) return Scalar(0);
      if (x >= c) return (d - x) / (d - c);
      return Scalar(1);
    case 2:
      if (x <= a || x >= b) return Scalar(0);
      if (x <= m) return (x - a) / (m - a);
      return (b - x) / (b - m);
    case 3:
      if (x < r) return Scalar(0);
      if (x <= q) return (x - r) / (q - r);
      return Scalar(1);
    default:
      throw ConfigError("membership index must be 1, 2 or 3");
  }
}

/// d(mu_v)/dx, one-sided at breakpoints: the branch whose condition includes
/// equality supplies the slope.
template <typename Scalar>
Scalar membership_slope(int v, Scalar x, const MembershipParams& p) {
  const Scalar c = Scalar(p.c), d = Scalar(p.d), a = Scalar(p.a), m = Scalar(p.m), b = Scalar(p.b), r = Scalar(p.r),
               q = Scalar(p.q);
  switch (v) {
    case 1:
      return (x >= c && x <= d) ? Scalar(-1) / (d - c) : Scalar(0);
    case 2:
      if (x <= a || x >= b) return Scalar(0);
      if (x <= m) return Scalar(1) / (m - a);
      return Scalar(-1) / (b - m);
    case 3:
      return (x >= r && x <= q) ? Scalar(1) / (q - r) : Scalar(0);
    default:
      throw ConfigError("membership index must be 1, 2 or 3");
  }
}

/// Fuzzy algebraic sum x + y - xy, evaluated as x + y(1 - x) so that 0 is an
/// exact identity and 1 an exact absorbing element.
template <typename Scalar>
Scalar algebraic_sum(Scalar x, Scalar y) {
  return x + y * (Scalar(1) - x);
}

/// Row-major left fold of algebraic_sum. Throws if an entry leaves [0, 1].
template <typename Scalar>
Scalar algebraic_sum_score(std::span<const Scalar> memberships) {
  Scalar s = 0;
  for (Scalar mu : memberships) {
    if (!(mu >= Scalar(0) && mu <= Scalar(1))) {
      throw NumericalError("algebraic_sum_score: membership " + std::to_string(double(mu)) + " outside [0, 1]");
    }
    s = algebraic_sum(s, mu);
  }
  return s;
}

template <typename Scalar>
using FuzzySets = std::array<std::vector<Scalar>, 3>;

template <typename Scalar>
FuzzySets<Scalar> fuzzify(std::span<const Scalar> patch, const MembershipParams& params) {
  FuzzySets<Scalar> out;
  for (int v = 0; v < 3; ++v) {
    out[v].reserve(patch.size());
    for (Scalar x : patch) out[v].push_back(membership(v + 1, x, params));
  }
  return out;
}

template <typename Scalar>
struct FuzzyPatch {
  std::vector<Scalar> memberships;
  int selected = 1;  // 1-based index of the winning fuzzy set
  std::array<Scalar, 3> scores{};
};

/// Index (0-based) of the largest score; ties go to the lowest index.
template <typename Scalar>
int argmax_score(const std::array<Scalar, 3>& scores) {
  int best = 0;
  for (int v = 1; v < 3; ++v)
    if (scores[v] > scores[best]) best = v;
  return best;
}

template <typename Scalar>
FuzzyPatch<Scalar> select_fuzzy_patch(const std::array<Scalar, 3>& scores, const FuzzySets<Scalar>& sets) {
  const int best = argmax_score(scores);
  return FuzzyPatch<Scalar>{sets[best], best + 1, scores};
}

/// Denominators below this fall back to the plain window mean.
inline constexpr double kCogEpsilon = 1e-12;

/// Center of gravity sum(mu * p) / sum(mu).
template <typename Scalar>
Scalar defuzzify_cog(std::span<const Scalar> patch, std::span<const Scalar> memberships) {
  if (patch.size() != memberships.size() || patch.empty()) {
    throw ShapeError("defuzzify_cog: patch and memberships must be non-empty and of equal size");
  }
  Scalar num = 0, den = 0;
  for (std::size_t i = 0; i < patch.size(); ++i) {
    num += memberships[i] * patch[i];
    den += memberships[i];
  }
  if (den < Scalar(kCogEpsilon)) {
    Scalar total = 0;
    for (Scalar x : patch) total += x;
    return total / static_cast<Scalar>(patch.size());
  }
  return num / den;
}

/// Full fuzzy pooling of one window: fuzzify, score, select, defuzzify.
template <typename Scalar>
Scalar fuzzy_pool_window(std::span<const Scalar> patch, const MembershipParams& params) {
  const FuzzySets<Scalar> sets = fuzzify(patch, params);
  std::array<Scalar, 3> scores{};
  for (int v = 0; v < 3; ++v) scores[v] = algebraic_sum_score(std::span<const Scalar>(sets[v]));
  const FuzzyPatch<Scalar> chosen = select_fuzzy_patch(scores, sets);
  return defuzzify_cog(patch, std::span<const Scalar>(chosen.memberships));
}

// Graph-level building blocks. Windows come from extract_windows and have
// shape [..., k*k].

/// [..., kk] -> [..., 3, kk] membership values of every fuzzy set.
template <typename Scalar>
Var<Scalar> fuzzify(Var<Scalar> windows, const MembershipParams& params);

/// [..., 3, kk] -> [..., kk]: memberships of the set with the largest
/// algebraic-sum score. The selection itself is piecewise constant.
template <typename Scalar>
Var<Scalar> select_memberships(Var<Scalar> fuzzified);

/// CoG over the trailing axis of matching [..., kk] tensors -> [...].
template <typename Scalar>
Var<Scalar> defuzzify_cog(Var<Scalar> memberships, Var<Scalar> windows);

/// Per-channel pooling of [N,C,H,W] -> [N,C,H',W'].
template <typename Scalar>
Var<Scalar> pool(Var<Scalar> input, const PoolConfig& config);

}  // namespace fkan
