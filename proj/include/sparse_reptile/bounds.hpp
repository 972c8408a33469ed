#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "sparse_reptile/error.hpp"

// Uniform generalization-gap bounds for first-order meta-learning over a
// bounded parameter domain, with the constants the covering-number argument
// produces: an eps-net of the task-level loss class (eps = B / sqrt(M)),
// Hoeffding on each net point, and a union bound over the net and, for
// k-sparse parameters, over the C(p, k) <= (e p / k)^k supports. All
// logarithms are natural.

namespace sparse_reptile::bounds {

struct BoundInputs {
  double B = 1.0;      // loss upper bound
  double G = 1.0;      // Lipschitz constant of the loss in theta
  double H = 0.0;      // smoothness constant
  double R = 1.0;      // radius of the parameter domain
  double eta = 0.0;    // inner learning rate
  double p = 1.0;      // total parameters
  double k = 1.0;      // total kept (nonzero) parameters
  double M = 1.0;      // number of training tasks
  double delta = 0.05;

  void validate() const {
    auto fail = [](const std::string& what) { throw DomainError("bound inputs: " + what); };
    if (!(B > 0.0)) fail("B must be positive");
    if (!(G > 0.0)) fail("G must be positive");
    if (!(H >= 0.0)) fail("H must be nonnegative");
    if (!(R > 0.0)) fail("R must be positive");
    if (!(eta >= 0.0)) fail("eta must be nonnegative");
    if (!(p >= 1.0)) fail("p must be at least 1");
    if (!(k >= 1.0 && k <= p)) fail("k must lie in [1, p]");
    if (!(M >= 1.0)) fail("M must be at least 1");
    if (!(delta > 0.0 && delta < 1.0)) fail("delta must lie in (0, 1)");
  }
};

/// Lipschitz constant of the one-step-adapted task loss: G (1 + eta H).
inline double task_lipschitz(double G, double eta, double H) { return G * (1.0 + eta * H); }

/// log of the L2 covering-number bound (1 + R / eps)^p of a radius-R ball.
inline double covering_log_bound(double p, double R, double eps) {
  if (!(eps > 0.0)) {
    throw DomainError("covering_log_bound: eps must be positive");
  }
  if (!(p >= 1.0) || !(R > 0.0)) {
    throw DomainError("covering_log_bound: need p >= 1 and R > 0");
  }
  return p * std::log1p(R / eps);
}

/// k ln(e p / k), an upper bound on ln C(p, k).
inline double support_cardinality_log(double p, double k) {
  if (!(k >= 1.0 && k <= p)) {
    throw DomainError("support_cardinality_log: k must lie in [1, p]");
  }
  return k * (1.0 + std::log(p / k));
}

/// Per-parameter covering term max(0, ln(sqrt(M) G R (1 + eta H) / B)).
inline double covering_term(const BoundInputs& in) {
  const double lipschitz = task_lipschitz(in.G, in.eta, in.H);
  return std::max(0.0, std::log(std::sqrt(in.M) * lipschitz * in.R / in.B));
}

namespace detail {

/// 2 eps + sqrt(2) B sqrt(log_count / M) with eps = B / sqrt(M).
inline double assemble(const BoundInputs& in, double log_count) {
  return 2.0 * in.B / std::sqrt(in.M) + std::numbers::sqrt2 * in.B * std::sqrt(log_count / in.M);
}

}  // namespace detail

/// Dense bound over all p parameters.
inline double dense_gap_bound(const BoundInputs& in) {
  in.validate();
  return detail::assemble(in, std::log(1.0 / in.delta) + in.p * covering_term(in));
}

/// Union-bound overhead k ln(e p / k) for choosing the support.
inline double sparse_union_term(const BoundInputs& in) { return support_cardinality_log(in.p, in.k); }

/// Sparse bound without the support union term; equals dense_gap_bound at k = p.
inline double sparse_gap_bound_fixed_support(const BoundInputs& in) {
  in.validate();
  return detail::assemble(in, std::log(1.0 / in.delta) + in.k * covering_term(in));
}

/// Bound for every parameter vector with at most k nonzeros.
inline double sparse_gap_bound(const BoundInputs& in) {
  in.validate();
  return detail::assemble(in, std::log(1.0 / in.delta) + sparse_union_term(in) + in.k * covering_term(in));
}

/// Population 0/1 risk bound from the empirical margin (ramp) risk.
inline double margin_risk_bound(const BoundInputs& in, double empirical_margin_risk) {
  in.validate();
  if (!(empirical_margin_risk >= 0.0 && empirical_margin_risk <= in.B)) {
    throw DomainError("empirical margin risk must lie in [0, B]");
  }
  return empirical_margin_risk + sparse_gap_bound(in);
}

}  // namespace sparse_reptile::bounds
