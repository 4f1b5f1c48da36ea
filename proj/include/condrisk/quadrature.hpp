#pragma once

#include <cmath>
#include <cstddef>
#include <utility>

namespace condrisk::quad {

struct Result {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};

namespace detail {

// Gauss-Kronrod 7-15 nodes and weights on [-1, 1].
inline constexpr double kNodes[8] = {
    0.99145537112081263920685469752632852,  // Kronrod only
    0.94910791234275852452618968404785126,
    0.86486442335976907278971278864092620,  // Kronrod only
    0.74153118559939443986386477328078840,
    0.58608723546769113029414483825872960,  // Kronrod only
    0.40584515137739716690660641207696146,
    0.20778495500789846760068940377324491,  // Kronrod only
    0.0};

inline constexpr double kWeightsK[8] = {
    0.02293532201052922496373200805896959,
    0.06309209262997855329070066318920429,
    0.10479001032225018383987632254151801,
    0.14065325971552591874518959051023792,
    0.16900472663926790282658342659855028,
    0.19035057806478540991325640242101368,
    0.20443294007529889241416199923464908,
    0.20948214108472782801299917489171426};

inline constexpr double kWeightsG[4] = {
    0.12948496616886969327061143267908202,  // nodes[1]
    0.27970539148927666790146777142377958,  // nodes[3]
    0.38183005050511894495036977548897513,  // nodes[5]
    0.41795918367346938775510204081632653}; // node 0

template <class F>
std::pair<double, double> gk15(F& f, double a, double b, std::size_t& evals) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double resk = kWeightsK[7] * f(c);
  double resg = kWeightsG[3] * f(c);
  evals += 1;
  for (int j = 0; j < 7; ++j) {
    const double fl = f(c - h * kNodes[j]);
    const double fr = f(c + h * kNodes[j]);
    evals += 2;
    resk += kWeightsK[j] * (fl + fr);
    if (j % 2 == 1) resg += kWeightsG[j / 2] * (fl + fr);
  }
  return {resk * h, std::fabs(resk - resg) * std::fabs(h)};
}

template <class F>
Result adapt(F& f, double a, double b, double tol, int depth) {
  std::size_t evals = 0;
  auto [val, err] = gk15(f, a, b, evals);
  if (err <= tol || depth <= 0) {
    Result r;
    r.value = val;
    r.error_estimate = err;
    r.evaluations = evals;
    r.converged = err <= tol;
    return r;
  }
  const double mid = 0.5 * (a + b);
  const Result left = adapt(f, a, mid, 0.5 * tol, depth - 1);
  const Result right = adapt(f, mid, b, 0.5 * tol, depth - 1);
  Result r;
  r.value = left.value + right.value;
  r.error_estimate = left.error_estimate + right.error_estimate;
  r.evaluations = evals + left.evaluations + right.evaluations;
  r.converged = left.converged && right.converged;
  return r;
}

}  // namespace detail

/// Adaptive Gauss-Kronrod 7-15 on [a, b] to absolute tolerance abs_tol.
template <class F>
Result integrate(F&& f, double a, double b, double abs_tol = 1e-10, int max_depth = 48) {
  F& ref = f;
  return detail::adapt(ref, a, b, abs_tol, max_depth);
}

}  // namespace condrisk::quad
