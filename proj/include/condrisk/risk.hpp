#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condrisk/prob_space.hpp"
#include "condrisk/rng.hpp"

namespace condrisk {

/// Risk-aversion level per atom, strictly positive.
struct RiskAversion {
  ConditionalValue level;

  RiskAversion(const Partition& F, double uniform_level)
      : RiskAversion(ConditionalValue(F.atom_count(), uniform_level)) {}

  explicit RiskAversion(ConditionalValue per_atom) : level(std::move(per_atom)) {
    for (double g : level.values)
      detail::require(g > 0.0 && std::isfinite(g), "RiskAversion: level must be finite and > 0");
  }

  double operator[](std::size_t a) const { return level[a]; }
  std::size_t size() const { return level.size(); }
};

namespace detail {

inline void check_finite(const RandomVariable& x, const char* what) {
  for (double v : x.values)
    require(std::isfinite(v), std::string(what) + ": non-finite input value");
}

}  // namespace detail

// ---- entropic risk -----------------------------------------------------------

/// Entropic risk (1/gamma) log E[exp(-gamma x) | F], evaluated per atom with a
/// max-shift so large gamma*x never overflows the exponential.
inline ConditionalValue entropic(const FiniteSpace& sp, const Partition& F,
                                 const RandomVariable& x, const RiskAversion& gamma) {
  detail::check_compatible(sp, F);
  detail::check_outcome_dim(sp, x, "entropic");
  detail::check_atom_dim(F, gamma.level, "entropic");
  detail::check_finite(x, "entropic");

  ConditionalValue out(F.atom_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a) {
    const auto& idx = F.members(a);
    double mass = 0.0, shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) {
      mass += sp.prob(i);
      shift = std::max(shift, -gamma[a] * x[i]);
    }
    double acc = 0.0;
    for (std::size_t i : idx) acc += (sp.prob(i) / mass) * std::exp(-gamma[a] * x[i] - shift);
    out[a] = (shift + std::log(acc)) / gamma[a];
  }
  return out;
}

/// Gradient of the entropic risk: z = -exp(-gamma x) / E[exp(-gamma x) | F].
/// The result is nonpositive with E[z|F] = -1 on every atom.
inline RandomVariable entropic_gradient(const FiniteSpace& sp, const Partition& F,
                                        const RandomVariable& x, const RiskAversion& gamma) {
  detail::check_compatible(sp, F);
  detail::check_outcome_dim(sp, x, "entropic_gradient");
  detail::check_atom_dim(F, gamma.level, "entropic_gradient");
  detail::check_finite(x, "entropic_gradient");

  RandomVariable out(sp.outcome_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a) {
    const auto& idx = F.members(a);
    double mass = 0.0, shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) {
      mass += sp.prob(i);
      shift = std::max(shift, -gamma[a] * x[i]);
    }
    double acc = 0.0;
    for (std::size_t i : idx) acc += (sp.prob(i) / mass) * std::exp(-gamma[a] * x[i] - shift);
    for (std::size_t i : idx) out[i] = -std::exp(-gamma[a] * x[i] - shift) / acc;
  }
  return out;
}

// ---- mean-variance and its monotone envelope ----------------------------------

/// Mean-variance functional -E[x|F] + (beta/2) Var[x|F].
inline ConditionalValue mean_variance(const FiniteSpace& sp, const Partition& F,
                                      const RandomVariable& x, const RiskAversion& beta) {
  detail::check_atom_dim(F, beta.level, "mean_variance");
  const ConditionalValue mean = cond_expect(sp, F, x);
  const ConditionalValue var = cond_variance(sp, F, x);
  ConditionalValue out(F.atom_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a)
    out[a] = -mean[a] + 0.5 * beta[a] * var[a];
  return out;
}

/// Gradient of mean_variance: beta (x - E[x|F]) - 1.
inline RandomVariable mean_variance_gradient(const FiniteSpace& sp, const Partition& F,
                                             const RandomVariable& x, const RiskAversion& beta) {
  detail::check_atom_dim(F, beta.level, "mean_variance_gradient");
  const ConditionalValue mean = cond_expect(sp, F, x);
  RandomVariable out(sp.outcome_count(), 0.0);
  for (std::size_t i = 0; i < sp.outcome_count(); ++i) {
    const std::size_t a = F.atom_of(i);
    out[i] = beta[a] * (x[i] - mean[a]) - 1.0;
  }
  return out;
}

/// Per atom, true when x - E[x|F] <= 1/beta everywhere on the atom: the region
/// where mean_variance is monotone and agrees with its monotone envelope.
inline std::vector<bool> in_monotonicity_domain(const FiniteSpace& sp, const Partition& F,
                                                const RandomVariable& x, const RiskAversion& beta,
                                                double tol = 1e-12) {
  detail::check_atom_dim(F, beta.level, "in_monotonicity_domain");
  const ConditionalValue mean = cond_expect(sp, F, x);
  std::vector<bool> out(F.atom_count(), true);
  for (std::size_t i = 0; i < sp.outcome_count(); ++i) {
    const std::size_t a = F.atom_of(i);
    if (x[i] - mean[a] > 1.0 / beta[a] + tol) out[a] = false;
  }
  return out;
}

/// Solves E[(k - x)^+ | F] = 1/beta for k, exactly, atom by atom.
///
/// phi(k) = E[(k - x)^+ | F] is piecewise linear and nondecreasing with
/// breakpoints at the atom's values, so the root lies on one closed-form
/// segment: sort the values, accumulate mass Q_j and weighted sum S_j of the
/// j smallest, and invert phi(k) = Q_j k - S_j on the segment that brackets
/// the target. phi vanishes below the smallest value and has slope 1 above the
/// largest, so a root exists and is unique for every target 1/beta > 0.
inline ConditionalValue solve_kx(const FiniteSpace& sp, const Partition& F,
                                 const RandomVariable& x, const RiskAversion& beta) {
  detail::check_compatible(sp, F);
  detail::check_outcome_dim(sp, x, "solve_kx");
  detail::check_atom_dim(F, beta.level, "solve_kx");
  detail::check_finite(x, "solve_kx");

  ConditionalValue out(F.atom_count(), 0.0);
  std::vector<std::pair<double, double>> vw;  // (value, normalized weight), sorted
  for (std::size_t a = 0; a < F.atom_count(); ++a) {
    const auto& idx = F.members(a);
    double mass = 0.0;
    for (std::size_t i : idx) mass += sp.prob(i);
    vw.clear();
    vw.reserve(idx.size());
    for (std::size_t i : idx) vw.emplace_back(x[i], sp.prob(i) / mass);
    std::sort(vw.begin(), vw.end());

    const double target = 1.0 / beta[a];
    double q = 0.0, s = 0.0;  // mass and weighted sum of values below the segment
    double k = 0.0;
    bool found = false;
    for (std::size_t j = 0; j < vw.size(); ++j) {
      q += vw[j].second;
      s += vw[j].second * vw[j].first;
      const double hi = (j + 1 < vw.size()) ? vw[j + 1].first : std::numeric_limits<double>::infinity();
      // On (vw[j].first, hi]: phi(k) = q k - s.
      const double phi_hi = std::isinf(hi) ? std::numeric_limits<double>::infinity() : q * hi - s;
      if (target <= phi_hi) {
        k = (target + s) / q;
        found = true;
        break;
      }
    }
    if (!found) k = (target + s) / q;  // unreachable: last segment has phi_hi = inf
    out[a] = k;
  }
  return out;
}

/// Monotone mean-variance: mean_variance evaluated at x truncated at the level
/// k solving E[(k - x)^+ | F] = 1/beta.
inline ConditionalValue mmv(const FiniteSpace& sp, const Partition& F, const RandomVariable& x,
                            const RiskAversion& beta) {
  const ConditionalValue k = solve_kx(sp, F, x, beta);
  return mean_variance(sp, F, minimum(x, lift(F, k)), beta);
}

/// Gradient of mmv: -beta (k - x)^+ with k = solve_kx(x). Nonpositive, and
/// E[gradient | F] = -1 by the defining property of k.
inline RandomVariable mmv_gradient(const FiniteSpace& sp, const Partition& F,
                                   const RandomVariable& x, const RiskAversion& beta) {
  const ConditionalValue k = solve_kx(sp, F, x, beta);
  RandomVariable out(sp.outcome_count(), 0.0);
  for (std::size_t i = 0; i < sp.outcome_count(); ++i) {
    const std::size_t a = F.atom_of(i);
    out[i] = -beta[a] * std::max(k[a] - x[i], 0.0);
  }
  return out;
}

// ---- duality -----------------------------------------------------------------

/// Dual variable: nonpositive with conditional expectation -1 on every atom.
/// Construction validates both properties.
struct DualElement {
  RandomVariable y;

  DualElement(const FiniteSpace& sp, const Partition& F, RandomVariable values,
              double tol = 1e-10)
      : y(std::move(values)) {
    detail::check_compatible(sp, F);
    detail::check_outcome_dim(sp, y, "DualElement");
    for (double v : y.values)
      detail::require(v <= tol, "DualElement: values must be nonpositive");
    const ConditionalValue mean = cond_expect(sp, F, y);
    for (std::size_t a = 0; a < mean.size(); ++a)
      detail::require(std::fabs(mean[a] + 1.0) <= tol,
                      "DualElement: conditional mean must be -1 on every atom (atom " +
                          std::to_string(a) + ")");
  }
};

/// Convex conjugate of mean_variance on the dual domain:
/// (1 / 2 beta) E[(1 + y)^2 | F].
inline ConditionalValue u_conjugate(const FiniteSpace& sp, const Partition& F,
                                    const DualElement& y, const RiskAversion& beta) {
  detail::check_atom_dim(F, beta.level, "u_conjugate");
  RandomVariable sq(sp.outcome_count(), 0.0);
  for (std::size_t i = 0; i < sp.outcome_count(); ++i) {
    const double t = 1.0 + y.y[i];
    sq[i] = t * t;
  }
  const ConditionalValue mean_sq = cond_expect(sp, F, sq);
  ConditionalValue out(F.atom_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a) out[a] = mean_sq[a] / (2.0 * beta[a]);
  return out;
}

/// Duality gap mmv(x) - (E[xy|F] - u_conjugate(y)), nonnegative up to round-off
/// and zero when y is the mmv gradient at x.
inline ConditionalValue fenchel_gap(const FiniteSpace& sp, const Partition& F,
                                    const RandomVariable& x, const DualElement& y,
                                    const RiskAversion& beta) {
  const ConditionalValue v = mmv(sp, F, x, beta);
  const ConditionalValue pairing = cond_expect(sp, F, x * y.y);
  const ConditionalValue conj = u_conjugate(sp, F, y, beta);
  ConditionalValue out(F.atom_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a) out[a] = v[a] - (pairing[a] - conj[a]);
  return out;
}

// ---- randomized axiom checker --------------------------------------------------

/// One concrete violation of an axiom, kept for reporting.
struct AxiomViolation {
  int trial = 0;
  std::size_t atom = 0;
  double lhs = 0.0;  // value that should have been <= rhs (or equal, for equalities)
  double rhs = 0.0;
  RandomVariable x;
  RandomVariable y;  // second argument where the axiom involves one
};

struct AxiomCheck {
  std::string axiom;
  bool passed = true;
  int violation_count = 0;
  std::optional<AxiomViolation> first_violation;
};

struct AxiomReport {
  std::vector<AxiomCheck> checks;
  int trials = 0;

  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  const AxiomCheck& check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.axiom == name) return c;
    throw std::invalid_argument("AxiomReport: unknown axiom " + name);
  }
};

/// Randomized test of the conditional risk measure axioms for an arbitrary
/// functional f: monotonicity (x >= y implies f(x) <= f(y)), cash invariance
/// (f(x + lift(m)) = f(x) - m), convexity with atom-wise mixing weights, and
/// locality (the value on an atom depends only on x restricted to that atom).
/// Violations are collected with witnesses rather than thrown.
inline AxiomReport axiom_check(const FiniteSpace& sp, const Partition& F,
                               const std::function<ConditionalValue(const RandomVariable&)>& f,
                               int trials, std::uint64_t seed, double tol = 1e-10) {
  detail::check_compatible(sp, F);
  detail::require(trials > 0, "axiom_check: trials must be positive");

  std::mt19937_64 gen(seed);
  const std::size_t n = sp.outcome_count();
  const std::size_t na = F.atom_count();

  AxiomReport report;
  report.trials = trials;
  report.checks = {AxiomCheck{"monotonicity", true, 0, std::nullopt},
                   AxiomCheck{"cash_invariance", true, 0, std::nullopt},
                   AxiomCheck{"convexity", true, 0, std::nullopt},
                   AxiomCheck{"locality", true, 0, std::nullopt}};
  AxiomCheck& mono = report.checks[0];
  AxiomCheck& cash = report.checks[1];
  AxiomCheck& conv = report.checks[2];
  AxiomCheck& loc = report.checks[3];

  auto record = [](AxiomCheck& c, int trial, std::size_t atom, double lhs, double rhs,
                   const RandomVariable& x, const RandomVariable& y) {
    c.passed = false;
    ++c.violation_count;
    if (!c.first_violation) c.first_violation = AxiomViolation{trial, atom, lhs, rhs, x, y};
  };

  const double scales[3] = {0.5, 1.0, 5.0};
  for (int t = 0; t < trials; ++t) {
    const double scale = scales[t % 3];
    RandomVariable x(n, 0.0), h(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) x[i] = scale * rng::normal(gen);
    for (std::size_t i = 0; i < n; ++i) h[i] = std::fabs(scale * rng::normal(gen));
    const ConditionalValue fx = f(x);

    {  // monotonicity: f(x + h) <= f(x) for h >= 0
      const ConditionalValue up = f(x + h);
      for (std::size_t a = 0; a < na; ++a)
        if (up[a] > fx[a] + tol) record(mono, t, a, up[a], fx[a], x + h, x);
    }

    {  // cash invariance: f(x + lift(m)) = f(x) - m
      ConditionalValue m(na, 0.0);
      for (std::size_t a = 0; a < na; ++a) m[a] = scale * rng::normal(gen);
      const ConditionalValue shifted = f(x + lift(F, m));
      for (std::size_t a = 0; a < na; ++a)
        if (std::fabs(shifted[a] - (fx[a] - m[a])) > tol)
          record(cash, t, a, shifted[a], fx[a] - m[a], x + lift(F, m), x);
    }

    {  // convexity with atom-wise weights
      RandomVariable y(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) y[i] = scale * rng::normal(gen);
      ConditionalValue lam(na, 0.0);
      for (std::size_t a = 0; a < na; ++a) lam[a] = rng::uniform01(gen);
      RandomVariable mix(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double l = lam[F.atom_of(i)];
        mix[i] = l * x[i] + (1.0 - l) * y[i];
      }
      const ConditionalValue fmix = f(mix);
      const ConditionalValue fy = f(y);
      for (std::size_t a = 0; a < na; ++a) {
        const double bound = lam[a] * fx[a] + (1.0 - lam[a]) * fy[a];
        if (fmix[a] > bound + tol) record(conv, t, a, fmix[a], bound, mix, y);
      }
    }

    {  // locality: zeroing x outside an atom union does not change f there
      std::vector<bool> keep(na, false);
      bool any = false;
      for (std::size_t a = 0; a < na; ++a) {
        keep[a] = rng::uniform01(gen) < 0.5;
        any = any || keep[a];
      }
      if (!any) keep[rng::index(gen, na)] = true;
      RandomVariable masked(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) masked[i] = keep[F.atom_of(i)] ? x[i] : 0.0;
      const ConditionalValue fm = f(masked);
      for (std::size_t a = 0; a < na; ++a)
        if (keep[a] && std::fabs(fm[a] - fx[a]) > tol) record(loc, t, a, fm[a], fx[a], masked, x);
    }
  }
  return report;
}

}  // namespace condrisk
