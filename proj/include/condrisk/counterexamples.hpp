#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condrisk/prob_space.hpp"
#include "condrisk/quadrature.hpp"

namespace condrisk {

// Heavy-tail payoff family on ([0,1], Lebesgue), indexed by n >= 1:
//
//   x_n = -1               on (1/2, 1]
//   x_n = c_n omega^{-1/p} on (2^{-(n+1)}, 1/2]
//   x_n = 0                on [0, 2^{-(n+1)}]
//
// with c_n chosen so E[x_n] = 1 exactly. The p-th moment admits the lower
// bound c_n^p n log 2, unbounded in n, while the entropic and the monotone
// mean-variance risks of x_n stay bounded: the family witnesses that neither
// risk measure is coercive with respect to the conditional p-norm.

inline double tail_coefficient(int n, double p) {
  detail::require(n >= 1, "tail_coefficient: n must be >= 1");
  detail::require(p > 1.0 && std::isfinite(p), "tail_coefficient: p must lie in (1, infinity)");
  const double e = 1.0 - 1.0 / p;
  return 1.5 * e / (std::pow(0.5, e) - std::pow(0.5, (n + 1) * e));
}

inline double tail_payoff(double omega, int n, double p) {
  const double c = tail_coefficient(n, p);  // validates n and p
  detail::require(omega >= 0.0 && omega <= 1.0, "tail_payoff: omega must lie in [0, 1]");
  if (omega > 0.5) return -1.0;
  if (omega > std::ldexp(1.0, -(n + 1))) return c * std::pow(omega, -1.0 / p);
  return 0.0;
}

/// Lower bound on E[|x_n|^p], divergent in n.
inline double tail_moment_lower_bound(int n, double p) {
  const double c = tail_coefficient(n, p);
  return std::pow(c, p) * static_cast<double>(n) * std::log(2.0);
}

struct EntropicTailCertificate {
  double mean = 0.0;                // quadrature evaluation of E[x_n]; equals 1
  double risk = 0.0;                // entropic risk of x_n; stays at most 1
  double moment_lower_bound = 0.0;  // diverges in n
};

/// Evaluates the family member n at norm exponent p under entropic risk with
/// aversion gamma. The power-region integrals use adaptive quadrature; the
/// mean integral is computed after the substitution omega = t^{p/(p-1)},
/// which makes its integrand constant.
inline EntropicTailCertificate entropic_tail_certificate(int n, double p, double gamma) {
  detail::require(gamma > 0.0 && std::isfinite(gamma),
                  "entropic_tail_certificate: gamma must be finite and > 0");
  const double c = tail_coefficient(n, p);
  const double lo = std::ldexp(1.0, -(n + 1));
  const double e = 1.0 - 1.0 / p;

  EntropicTailCertificate out;
  const auto flat = [&](double) { return c / e; };
  out.mean = -0.5 + quad::integrate(flat, std::pow(lo, e), std::pow(0.5, e)).value;

  // E[exp(-gamma x_n)] with the factor exp(gamma) of the loss region pulled
  // out so nothing overflows
  const auto tail_term = [&](double w) { return std::exp(-gamma * c * std::pow(w, -1.0 / p)); };
  const double j = quad::integrate(tail_term, lo, 0.5).value;
  out.risk = 1.0 + std::log(0.5 + std::exp(-gamma) * (lo + j)) / gamma;

  out.moment_lower_bound = tail_moment_lower_bound(n, p);
  return out;
}

// ---- monotone mean-variance of the p = 2 family ----------------------------------

/// Which regions of x_n the truncation level k_n reaches.
enum class TruncationCase {
  floor_only,      // k <= 0: only the loss region is truncated (beta >= 2)
  floor_and_zero,  // 0 < k below the power region (4/5 < beta < 2)
  enters_tail,     // k cuts into the power region (small beta)
};

inline const char* to_string(TruncationCase c) {
  switch (c) {
    case TruncationCase::floor_only: return "floor-only";
    case TruncationCase::floor_and_zero: return "floor-and-zero";
    case TruncationCase::enters_tail: return "enters-tail";
  }
  return "?";
}

/// Upper edge of the small-beta branch with a closed-form truncation level.
inline double truncation_small_beta_limit() {
  return 1.0 / (1.5 * (std::sqrt(5.0) - std::sqrt(2.0)) * (std::sqrt(2.0) + 1.0) + 0.5);
}

struct TruncationReport {
  TruncationCase case_id = TruncationCase::floor_only;
  double k = 0.0;                   // closed-form truncation level
  double risk = 0.0;                // monotone mean-variance value of x_n
  double moment_lower_bound = 0.0;  // second-moment bound, diverges in n
  bool side_conditions_hold = true; // the case's closed form is valid at this n
};

/// Closed-form truncation level and risk of the p = 2 family member n.
///
/// Three disjoint ranges of beta admit closed forms; for beta in the gap
/// between the small-beta branch and 4/5 no closed form is available and the
/// call is rejected. In the small-beta branch the level solves
/// k^2 (1 + 2^{-(n+1)}) - (sqrt(2) c_n + 1/beta - 1/2) k + c_n^2 = 0
/// (larger root), valid once the crossing point (c_n/k)^2 falls inside the
/// power region; side_conditions_hold records whether that happens at this n.
inline TruncationReport truncation_certificate(int n, double beta) {
  detail::require(beta > 0.0 && std::isfinite(beta),
                  "truncation_certificate: beta must be finite and > 0");
  const double c = tail_coefficient(n, 2.0);
  const double eps = std::ldexp(1.0, -(n + 1));
  const double limit = truncation_small_beta_limit();

  TruncationReport rep;
  rep.moment_lower_bound = tail_moment_lower_bound(n, 2.0);

  double tail_crossing = 0.0;  // lower integration bound inside the power region
  bool tail_active = false;
  if (beta >= 2.0) {
    rep.case_id = TruncationCase::floor_only;
    rep.k = 2.0 / beta - 1.0;
    rep.side_conditions_hold = true;  // k in [-1, 0] for every beta >= 2 and every n
  } else if (beta > 0.8) {
    rep.case_id = TruncationCase::floor_and_zero;
    rep.k = (1.0 / beta - 0.5) / (0.5 + eps);
    rep.side_conditions_hold = rep.k > 0.0 && rep.k <= std::sqrt(2.0) * c;
  } else if (beta < limit) {
    rep.case_id = TruncationCase::enters_tail;
    const double a = std::sqrt(2.0) * c + 1.0 / beta - 0.5;
    const double disc = a * a - 4.0 * c * c * (1.0 + eps);
    rep.k = (a + std::sqrt(std::max(disc, 0.0))) / (2.0 * (1.0 + eps));
    const double s = (c / rep.k) * (c / rep.k);
    rep.side_conditions_hold = disc >= 0.0 && s >= eps && s <= 0.5;
    tail_crossing = std::min(std::max(s, eps), 0.5);
    tail_active = true;
  } else {
    throw std::invalid_argument(
        "truncation_certificate: beta = " + std::to_string(beta) +
        " has no closed form; covered ranges are (0, " + std::to_string(limit) +
        "), (0.8, 2), and [2, infinity)");
  }

  // risk = (beta/2) E[((k - x)^+)^2] + 1/(2 beta) - k
  const double k = rep.k;
  double e2 = 0.5 * (k + 1.0) * (k + 1.0);  // loss region, x = -1
  if (k > 0.0) e2 += k * k * eps;           // zero region
  if (tail_active) {
    const auto sq = [&](double w) {
      const double d = k - c / std::sqrt(w);
      return d * d;
    };
    e2 += quad::integrate(sq, tail_crossing, 0.5, 1e-12).value;
  }
  rep.risk = 0.5 * beta * e2 + 0.5 / beta - k;
  return rep;
}

/// Smallest n at which the closed form of truncation_certificate is valid for
/// this beta; 1 except deep in the small-beta branch.
inline int truncation_min_valid_n(double beta) {
  for (int n = 1; n <= 64; ++n)
    if (truncation_certificate(n, beta).side_conditions_hold) return n;
  throw std::runtime_error("truncation_min_valid_n: no valid n up to 64 for beta = " +
                           std::to_string(beta));
}

// ---- discretization ---------------------------------------------------------------

struct Discretization {
  FiniteSpace space;
  RandomVariable payoff;
};

/// Midpoint discretization of ([0,1], Lebesgue) and of the family member x_n:
/// uniform cells, payoff sampled at cell centers. Risk evaluations on the
/// discretized space converge to the closed forms at rate O(1/cells).
inline Discretization discretize_unit_interval(std::size_t cells, int n, double p) {
  detail::require(cells >= 100, "discretize_unit_interval: at least 100 cells required");
  const double w = 1.0 / static_cast<double>(cells);
  std::vector<double> probs(cells, w);
  RandomVariable x(cells, 0.0);
  for (std::size_t i = 0; i < cells; ++i)
    x[i] = tail_payoff((static_cast<double>(i) + 0.5) * w, n, p);
  return {FiniteSpace(std::move(probs)), std::move(x)};
}

}  // namespace condrisk
