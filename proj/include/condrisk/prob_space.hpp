#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace condrisk {

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

/// One real per outcome: a random variable on the full discrete algebra.
struct RandomVariable {
  std::vector<double> values;

  RandomVariable() = default;
  explicit RandomVariable(std::vector<double> v) : values(std::move(v)) {}
  RandomVariable(std::initializer_list<double> v) : values(v) {}
  RandomVariable(std::size_t n, double fill) : values(n, fill) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
};

/// One real per atom: a quantity measurable with respect to the sub-algebra.
struct ConditionalValue {
  std::vector<double> values;

  ConditionalValue() = default;
  explicit ConditionalValue(std::vector<double> v) : values(std::move(v)) {}
  ConditionalValue(std::initializer_list<double> v) : values(v) {}
  ConditionalValue(std::size_t n, double fill) : values(n, fill) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
};

/// Finite sample space with strictly positive outcome probabilities.
///
/// Null outcomes are rejected at construction, so almost-sure statements
/// about this space are plain pointwise statements.
class FiniteSpace {
 public:
  explicit FiniteSpace(std::vector<double> probs) : probs_(std::move(probs)) {
    detail::require(!probs_.empty(), "FiniteSpace: at least one outcome required");
    // compensated summation keeps the check meaningful for large spaces
    double sum = 0.0, comp = 0.0;
    for (double p : probs_) {
      detail::require(p > 0.0, "FiniteSpace: outcome probabilities must be strictly positive");
      const double t = sum + p;
      comp += std::fabs(sum) >= std::fabs(p) ? (sum - t) + p : (p - t) + sum;
      sum = t;
    }
    sum += comp;
    detail::require(std::fabs(sum - 1.0) <= 1e-12,
                    "FiniteSpace: probabilities must sum to 1 (got " + std::to_string(sum) + ")");
  }

  std::size_t outcome_count() const { return probs_.size(); }
  double prob(std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

/// Sub-algebra represented by its atoms: outcome i belongs to atom atom_of(i).
/// Every atom must own at least one outcome.
class Partition {
 public:
  Partition(std::vector<std::size_t> atom_of, std::size_t atom_count)
      : atom_of_(std::move(atom_of)), members_(atom_count) {
    detail::require(atom_count > 0, "Partition: at least one atom required");
    detail::require(!atom_of_.empty(), "Partition: at least one outcome required");
    for (std::size_t i = 0; i < atom_of_.size(); ++i) {
      detail::require(atom_of_[i] < atom_count, "Partition: atom index out of range");
      members_[atom_of_[i]].push_back(i);
    }
    for (std::size_t a = 0; a < atom_count; ++a) {
      detail::require(!members_[a].empty(),
                      "Partition: atom " + std::to_string(a) + " owns no outcome");
    }
  }

  /// Single-atom partition (trivial sub-algebra).
  static Partition trivial(std::size_t outcome_count) {
    return Partition(std::vector<std::size_t>(outcome_count, 0), 1);
  }

  std::size_t atom_count() const { return members_.size(); }
  std::size_t outcome_count() const { return atom_of_.size(); }
  std::size_t atom_of(std::size_t outcome) const { return atom_of_[outcome]; }
  const std::vector<std::size_t>& members(std::size_t atom) const { return members_[atom]; }
  const std::vector<std::size_t>& atom_map() const { return atom_of_; }

 private:
  std::vector<std::size_t> atom_of_;
  std::vector<std::vector<std::size_t>> members_;
};

namespace detail {

inline void check_compatible(const FiniteSpace& sp, const Partition& F) {
  require(sp.outcome_count() == F.outcome_count(),
          "space and partition disagree on the number of outcomes");
}

inline void check_outcome_dim(const FiniteSpace& sp, const RandomVariable& x, const char* what) {
  require(x.size() == sp.outcome_count(), std::string(what) + ": wrong number of outcome values");
}

inline void check_atom_dim(const Partition& F, const ConditionalValue& c, const char* what) {
  require(c.size() == F.atom_count(), std::string(what) + ": wrong number of atom values");
}

}  // namespace detail

/// P(A) per atom.
inline ConditionalValue atom_probs(const FiniteSpace& sp, const Partition& F) {
  detail::check_compatible(sp, F);
  ConditionalValue out(F.atom_count(), 0.0);
  for (std::size_t i = 0; i < sp.outcome_count(); ++i) out[F.atom_of(i)] += sp.prob(i);
  return out;
}

/// Conditional expectation: per atom A, sum_{i in A} p_i x_i / P(A).
inline ConditionalValue cond_expect(const FiniteSpace& sp, const Partition& F,
                                    const RandomVariable& x) {
  detail::check_compatible(sp, F);
  detail::check_outcome_dim(sp, x, "cond_expect");
  std::vector<double> mass(F.atom_count(), 0.0), acc(F.atom_count(), 0.0);
  for (std::size_t i = 0; i < sp.outcome_count(); ++i) {
    const std::size_t a = F.atom_of(i);
    mass[a] += sp.prob(i);
    acc[a] += sp.prob(i) * x[i];
  }
  ConditionalValue out(F.atom_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a) out[a] = acc[a] / mass[a];
  return out;
}

/// Conditional variance, computed centered so the result is nonnegative;
/// tiny negative round-off is clamped to zero.
inline ConditionalValue cond_variance(const FiniteSpace& sp, const Partition& F,
                                      const RandomVariable& x) {
  const ConditionalValue mean = cond_expect(sp, F, x);
  std::vector<double> mass(F.atom_count(), 0.0), acc(F.atom_count(), 0.0);
  for (std::size_t i = 0; i < sp.outcome_count(); ++i) {
    const std::size_t a = F.atom_of(i);
    const double d = x[i] - mean[a];
    mass[a] += sp.prob(i);
    acc[a] += sp.prob(i) * d * d;
  }
  ConditionalValue out(F.atom_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a) out[a] = std::max(acc[a] / mass[a], 0.0);
  return out;
}

/// Conditional p-norm (E[|x|^p | F])^(1/p); p = infinity gives the per-atom
/// maximum of |x|.
inline ConditionalValue cond_norm(const FiniteSpace& sp, const Partition& F,
                                  const RandomVariable& x, double p) {
  detail::check_compatible(sp, F);
  detail::check_outcome_dim(sp, x, "cond_norm");
  detail::require(p >= 1.0, "cond_norm: p must be >= 1");
  ConditionalValue out(F.atom_count(), 0.0);
  if (std::isinf(p)) {
    for (std::size_t i = 0; i < sp.outcome_count(); ++i) {
      const std::size_t a = F.atom_of(i);
      out[a] = std::max(out[a], std::fabs(x[i]));
    }
    return out;
  }
  std::vector<double> mass(F.atom_count(), 0.0), acc(F.atom_count(), 0.0);
  for (std::size_t i = 0; i < sp.outcome_count(); ++i) {
    const std::size_t a = F.atom_of(i);
    mass[a] += sp.prob(i);
    acc[a] += sp.prob(i) * std::pow(std::fabs(x[i]), p);
  }
  for (std::size_t a = 0; a < F.atom_count(); ++a) out[a] = std::pow(acc[a] / mass[a], 1.0 / p);
  return out;
}

/// Embed an atom-indexed value as an outcome-indexed one (constant on atoms).
inline RandomVariable lift(const Partition& F, const ConditionalValue& c) {
  detail::check_atom_dim(F, c, "lift");
  RandomVariable out(F.outcome_count(), 0.0);
  for (std::size_t i = 0; i < F.outcome_count(); ++i) out[i] = c[F.atom_of(i)];
  return out;
}

// ---- pointwise algebra and lattice operations -------------------------------

namespace detail {

inline void check_same_size(const RandomVariable& x, const RandomVariable& y, const char* what) {
  require(x.size() == y.size(), std::string(what) + ": dimension mismatch");
}

inline void check_same_size(const ConditionalValue& x, const ConditionalValue& y,
                            const char* what) {
  require(x.size() == y.size(), std::string(what) + ": dimension mismatch");
}

}  // namespace detail

inline RandomVariable operator+(const RandomVariable& x, const RandomVariable& y) {
  detail::check_same_size(x, y, "operator+");
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return out;
}

inline RandomVariable operator-(const RandomVariable& x, const RandomVariable& y) {
  detail::check_same_size(x, y, "operator-");
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return out;
}

inline RandomVariable operator-(const RandomVariable& x) {
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = -x[i];
  return out;
}

/// Pointwise product.
inline RandomVariable operator*(const RandomVariable& x, const RandomVariable& y) {
  detail::check_same_size(x, y, "operator*");
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return out;
}

inline RandomVariable operator*(double s, const RandomVariable& x) {
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i];
  return out;
}

inline RandomVariable operator+(const RandomVariable& x, double s) {
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + s;
  return out;
}

inline ConditionalValue operator+(const ConditionalValue& x, const ConditionalValue& y) {
  detail::check_same_size(x, y, "operator+");
  ConditionalValue out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return out;
}

inline ConditionalValue operator-(const ConditionalValue& x, const ConditionalValue& y) {
  detail::check_same_size(x, y, "operator-");
  ConditionalValue out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return out;
}

inline ConditionalValue operator*(const ConditionalValue& x, const ConditionalValue& y) {
  detail::check_same_size(x, y, "operator*");
  ConditionalValue out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return out;
}

inline ConditionalValue operator*(double s, const ConditionalValue& x) {
  ConditionalValue out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i];
  return out;
}

inline RandomVariable minimum(const RandomVariable& x, const RandomVariable& y) {
  detail::check_same_size(x, y, "minimum");
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::min(x[i], y[i]);
  return out;
}

inline RandomVariable maximum(const RandomVariable& x, const RandomVariable& y) {
  detail::check_same_size(x, y, "maximum");
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(x[i], y[i]);
  return out;
}

/// Positive part, pointwise.
inline RandomVariable pos_part(const RandomVariable& x) {
  RandomVariable out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(x[i], 0.0);
  return out;
}

inline double max_abs(const RandomVariable& x) {
  double m = 0.0;
  for (double v : x.values) m = std::max(m, std::fabs(v));
  return m;
}

inline double max_abs(const ConditionalValue& x) {
  double m = 0.0;
  for (double v : x.values) m = std::max(m, std::fabs(v));
  return m;
}

// ---- colinearity ------------------------------------------------------------

/// Outcome of trying to write x = alpha * y with an atom-wise constant alpha.
struct ColinearityResult {
  bool ok = false;
  ConditionalValue alpha;  // valid only when ok
  std::string reason;      // set only when !ok
};

/// Extracts the atom-wise factor alpha with x = alpha * y, which exists exactly
/// when the conditional Cauchy-Schwarz inequality |E[xy|F]| <= |||x|||_2 |||y|||_2
/// is an equality on every atom (checked within tol, scaled by the norms).
/// On atoms where x vanishes, alpha is 0. Requires |||y|||_2 > 0 on every atom.
inline ColinearityResult colinearity_extract(const FiniteSpace& sp, const Partition& F,
                                             const RandomVariable& x, const RandomVariable& y,
                                             double tol = 1e-10) {
  detail::check_compatible(sp, F);
  detail::check_outcome_dim(sp, x, "colinearity_extract");
  detail::check_outcome_dim(sp, y, "colinearity_extract");

  const ConditionalValue cross = cond_expect(sp, F, x * y);
  const ConditionalValue nx = cond_norm(sp, F, x, 2.0);
  const ConditionalValue ny = cond_norm(sp, F, y, 2.0);

  ColinearityResult res;
  res.alpha = ConditionalValue(F.atom_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a) {
    detail::require(ny[a] > 0.0, "colinearity_extract: y has zero conditional norm on atom " +
                                     std::to_string(a));
    const double gap = nx[a] * ny[a] - std::fabs(cross[a]);
    if (std::fabs(gap) > tol * (1.0 + nx[a] * ny[a])) {
      res.ok = false;
      res.reason = "Cauchy-Schwarz strict on atom " + std::to_string(a) +
                   " (defect " + std::to_string(gap) + ")";
      return res;
    }
    res.alpha[a] = (nx[a] == 0.0) ? 0.0 : cross[a] / (ny[a] * ny[a]);
  }

  const RandomVariable recon = lift(F, res.alpha) * y;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(x[i] - recon[i]));
  if (worst > tol * (1.0 + max_abs(x))) {
    res.ok = false;
    res.reason = "reconstruction residual " + std::to_string(worst) + " exceeds tolerance";
    return res;
  }
  res.ok = true;
  return res;
}

}  // namespace condrisk
