#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condrisk/prob_space.hpp"

namespace condrisk {

/// Relative singular value threshold below which a direction is treated as
/// numerically dependent.
inline constexpr double kRankThreshold = 1e-10;

/// Condition number limit for the weighted Gram matrix of the payoffs.
inline constexpr double kGramConditionLimit = 1e12;

/// Portfolio with atom-wise constant coefficients: one ConditionalValue per asset.
struct PortfolioCoefficients {
  std::vector<ConditionalValue> alpha;

  std::size_t asset_count() const { return alpha.size(); }
};

/// One-period market on a finite space: d payoffs priced by a state-price
/// density psi through pi(x) = E[psi x | F]. All linear algebra is organised
/// per atom, since both pricing and attainability decouple across atoms.
class MarketModel {
 public:
  struct AtomBlock {
    std::vector<std::size_t> outcomes;  // outcome indices of the atom
    Eigen::VectorXd weights;            // conditional probabilities p_i / P(A)
    Eigen::MatrixXd payoffs;            // |A| x d, one column per asset
    Eigen::VectorXd psi;                // state-price density on the atom
    Eigen::VectorXd price_coeff;        // pi(y_j) on the atom, length d
    Eigen::VectorXd expect_coeff;       // E[y_j | F] on the atom, length d
  };

  MarketModel(FiniteSpace space, Partition partition, std::vector<RandomVariable> payoffs,
              RandomVariable state_price)
      : space_(std::move(space)),
        partition_(std::move(partition)),
        payoffs_(std::move(payoffs)),
        state_price_(std::move(state_price)) {
    detail::check_compatible(space_, partition_);
    detail::require(!payoffs_.empty(), "MarketModel: at least one payoff required");
    for (const auto& y : payoffs_) detail::check_outcome_dim(space_, y, "MarketModel payoff");
    detail::check_outcome_dim(space_, state_price_, "MarketModel state price");

    const std::size_t d = payoffs_.size();
    blocks_.resize(partition_.atom_count());
    for (std::size_t a = 0; a < partition_.atom_count(); ++a) {
      AtomBlock& blk = blocks_[a];
      blk.outcomes = partition_.members(a);
      const std::size_t m = blk.outcomes.size();
      double mass = 0.0;
      for (std::size_t i : blk.outcomes) mass += space_.prob(i);
      blk.weights.resize(m);
      blk.psi.resize(m);
      blk.payoffs.resize(m, d);
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = blk.outcomes[r];
        blk.weights(r) = space_.prob(i) / mass;
        blk.psi(r) = state_price_[i];
        for (std::size_t j = 0; j < d; ++j) blk.payoffs(r, j) = payoffs_[j][i];
      }
      blk.price_coeff = blk.payoffs.transpose() * (blk.weights.cwiseProduct(blk.psi));
      blk.expect_coeff = blk.payoffs.transpose() * blk.weights;
    }
  }

  const FiniteSpace& space() const { return space_; }
  const Partition& partition() const { return partition_; }
  const std::vector<RandomVariable>& payoffs() const { return payoffs_; }
  const RandomVariable& state_price() const { return state_price_; }
  std::size_t asset_count() const { return payoffs_.size(); }
  const AtomBlock& atom_block(std::size_t a) const { return blocks_[a]; }

 private:
  FiniteSpace space_;
  Partition partition_;
  std::vector<RandomVariable> payoffs_;
  RandomVariable state_price_;
  std::vector<AtomBlock> blocks_;
};

/// Payoff of the portfolio sum_j lift(alpha_j) * y_j.
inline RandomVariable synthesize(const MarketModel& m, const PortfolioCoefficients& coeff) {
  detail::require(coeff.asset_count() == m.asset_count(),
                  "synthesize: coefficient count must match asset count");
  const Partition& F = m.partition();
  for (const auto& c : coeff.alpha) detail::check_atom_dim(F, c, "synthesize");
  RandomVariable out(m.space().outcome_count(), 0.0);
  for (std::size_t j = 0; j < coeff.asset_count(); ++j)
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += coeff.alpha[j][F.atom_of(i)] * m.payoffs()[j][i];
  return out;
}

/// Price functional pi(x) = E[psi x | F].
inline ConditionalValue price(const MarketModel& m, const RandomVariable& x) {
  return cond_expect(m.space(), m.partition(), m.state_price() * x);
}

namespace detail {

/// Least-squares attainability test on one atom: weighted residual of
/// projecting x onto the payoff span. Returns the residual in the atom's
/// L2 norm together with the minimal-norm coefficient vector.
inline std::pair<double, Eigen::VectorXd> atom_span_residual(const MarketModel::AtomBlock& blk,
                                                             const Eigen::VectorXd& x_atom) {
  const Eigen::VectorXd sqw = blk.weights.cwiseSqrt();
  const Eigen::MatrixXd B = sqw.asDiagonal() * blk.payoffs;
  const Eigen::VectorXd t = sqw.cwiseProduct(x_atom);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  Eigen::VectorXd coeff = Eigen::VectorXd::Zero(blk.payoffs.cols());
  Eigen::VectorXd fitted = Eigen::VectorXd::Zero(t.size());
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
    const double s = svd.singularValues()(k);
    if (s <= kRankThreshold * smax) continue;
    const double proj = svd.matrixU().col(k).dot(t);
    coeff += (proj / s) * svd.matrixV().col(k);
    fitted += proj * svd.matrixU().col(k);
  }
  return {(t - fitted).norm(), coeff};
}

}  // namespace detail

/// Per-atom attainability of x by some portfolio, decided by the weighted
/// least-squares residual against tol * (1 + max |x| on the atom).
inline std::vector<bool> membership_in_M(const MarketModel& m, const RandomVariable& x,
                                         double tol = 1e-8) {
  detail::check_outcome_dim(m.space(), x, "membership_in_M");
  std::vector<bool> out(m.partition().atom_count(), false);
  for (std::size_t a = 0; a < m.partition().atom_count(); ++a) {
    const auto& blk = m.atom_block(a);
    Eigen::VectorXd xa(blk.outcomes.size());
    for (std::size_t r = 0; r < blk.outcomes.size(); ++r) xa(r) = x[blk.outcomes[r]];
    const double scale = 1.0 + xa.cwiseAbs().maxCoeff();
    out[a] = detail::atom_span_residual(blk, xa).first <= tol * scale;
  }
  return out;
}

/// Result of the structural market checks that make a risk-free return exist:
/// the constant payoff 1 must be attainable and have strictly positive price
/// on every atom.
struct RiskFreeCheck {
  std::vector<bool> unit_attainable;  // per atom
  std::vector<bool> unit_price_positive;
  ConditionalValue unit_price;

  bool ok() const {
    for (std::size_t a = 0; a < unit_attainable.size(); ++a)
      if (!unit_attainable[a] || !unit_price_positive[a]) return false;
    return true;
  }
};

inline RiskFreeCheck validate_risk_free(const MarketModel& m, double tol = 1e-8) {
  RiskFreeCheck out;
  out.unit_attainable = membership_in_M(m, RandomVariable(m.space().outcome_count(), 1.0), tol);
  out.unit_price = price(m, RandomVariable(m.space().outcome_count(), 1.0));
  out.unit_price_positive.resize(out.unit_price.size());
  for (std::size_t a = 0; a < out.unit_price.size(); ++a)
    out.unit_price_positive[a] = out.unit_price[a] > 0.0;
  return out;
}

/// Risk-free return 1 / pi(1). Throws when the unit payoff is not attainable
/// or its price is not strictly positive on some atom.
inline ConditionalValue risk_free_return(const MarketModel& m, double tol = 1e-8) {
  const RiskFreeCheck chk = validate_risk_free(m, tol);
  for (std::size_t a = 0; a < chk.unit_price.size(); ++a) {
    if (!chk.unit_attainable[a])
      throw std::invalid_argument("risk_free_return: unit payoff not attainable on atom " +
                                  std::to_string(a));
    if (!chk.unit_price_positive[a])
      throw std::invalid_argument("risk_free_return: unit payoff has nonpositive price on atom " +
                                  std::to_string(a));
  }
  ConditionalValue out(chk.unit_price.size(), 0.0);
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = 1.0 / chk.unit_price[a];
  return out;
}

/// Result of checking that pricing and conditional expectation are linearly
/// independent functionals on the payoff span of every atom. When they are,
/// a zero-price payoff with conditional expectation 1 exists; one is returned
/// as a witness.
struct IndependenceCheck {
  std::vector<bool> independent;  // per atom
  std::optional<RandomVariable> zero_price_unit_mean;  // witness, present when all atoms pass

  bool ok() const {
    for (bool b : independent)
      if (!b) return false;
    return true;
  }
};

inline IndependenceCheck validate_pricing_independence(const MarketModel& m) {
  const std::size_t na = m.partition().atom_count();
  const std::size_t d = m.asset_count();
  IndependenceCheck out;
  out.independent.resize(na, false);
  RandomVariable witness(m.space().outcome_count(), 0.0);
  bool all = true;
  for (std::size_t a = 0; a < na; ++a) {
    if (d < 2) {  // two independent functionals need at least two assets
      all = false;
      continue;
    }
    const auto& blk = m.atom_block(a);
    Eigen::MatrixXd A(2, d);
    A.row(0) = blk.price_coeff.transpose();
    A.row(1) = blk.expect_coeff.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    out.independent[a] = smax > 0.0 && svd.singularValues()(1) > kRankThreshold * smax;
    if (!out.independent[a]) {
      all = false;
      continue;
    }
    Eigen::Vector2d rhs(0.0, 1.0);
    const Eigen::VectorXd alpha = svd.solve(rhs);  // least-norm portfolio on this atom
    const Eigen::VectorXd z = blk.payoffs * alpha;
    for (std::size_t r = 0; r < blk.outcomes.size(); ++r) witness[blk.outcomes[r]] = z(r);
  }
  if (all) out.zero_price_unit_mean = witness;
  return out;
}

/// Orthogonal projection of z onto the payoff span, atom by atom, in the
/// conditional L2 geometry. Throws when the weighted Gram matrix of the
/// retained payoff directions is condition-deficient beyond the limit.
inline RandomVariable project_onto_M(const MarketModel& m, const RandomVariable& z) {
  detail::check_outcome_dim(m.space(), z, "project_onto_M");
  RandomVariable out(m.space().outcome_count(), 0.0);
  for (std::size_t a = 0; a < m.partition().atom_count(); ++a) {
    const auto& blk = m.atom_block(a);
    const Eigen::VectorXd sqw = blk.weights.cwiseSqrt();
    const Eigen::MatrixXd B = sqw.asDiagonal() * blk.payoffs;
    Eigen::VectorXd t(blk.outcomes.size());
    for (std::size_t r = 0; r < blk.outcomes.size(); ++r)
      t(r) = sqw(r) * z[blk.outcomes[r]];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinU);
    const double smax = svd.singularValues()(0);
    double smin_kept = smax;
    Eigen::VectorXd fitted = Eigen::VectorXd::Zero(t.size());
    for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
      const double s = svd.singularValues()(k);
      if (s <= kRankThreshold * smax) continue;
      smin_kept = s;
      fitted += svd.matrixU().col(k).dot(t) * svd.matrixU().col(k);
    }
    const double gram_cond = (smax / smin_kept) * (smax / smin_kept);
    if (!(gram_cond <= kGramConditionLimit))
      throw std::runtime_error("project_onto_M: weighted Gram matrix on atom " +
                               std::to_string(a) + " is ill-conditioned (condition " +
                               std::to_string(gram_cond) + ")");
    for (std::size_t r = 0; r < blk.outcomes.size(); ++r)
      out[blk.outcomes[r]] = fitted(r) / sqw(r);
  }
  return out;
}

}  // namespace condrisk
