#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condrisk/market.hpp"
#include "condrisk/prob_space.hpp"
#include "condrisk/risk.hpp"
#include "condrisk/rng.hpp"

namespace condrisk {

/// Raised when a constrained problem has no feasible point on some atom.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolveOptions {
  double tol = 1e-9;       // projected-gradient stationarity tolerance (the
                           // portfolio solver scales it by 1 + the gradient norm)
  int max_iter = 10000;    // per atom
  int starts = 5;          // multi-start count for the constrained entropic solve
  std::uint64_t seed = 123456789;
};

namespace detail {

/// Root of sum_r q_r (k - x_r)^+ = target on one atom, by inverting the
/// piecewise-linear segment that brackets the target. Exact up to round-off.
inline double atom_solve_k(const Eigen::VectorXd& q, const Eigen::VectorXd& x, double target) {
  const Eigen::Index n = x.size();
  std::vector<std::pair<double, double>> vw(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) vw[static_cast<std::size_t>(i)] = {x(i), q(i)};
  std::sort(vw.begin(), vw.end());
  double cum_q = 0.0, cum_s = 0.0;
  for (std::size_t j = 0; j < vw.size(); ++j) {
    cum_q += vw[j].second;
    cum_s += vw[j].second * vw[j].first;
    if (j + 1 < vw.size()) {
      const double phi_hi = cum_q * vw[j + 1].first - cum_s;
      if (target <= phi_hi) return (target + cum_s) / cum_q;
    }
  }
  return (target + cum_s) / cum_q;
}

/// Monotone mean-variance value on one atom; optionally its gradient in the
/// outcome values, which is beta (min(x,k) - k) = -beta (k - x)^+.
inline double atom_mmv_value(const Eigen::VectorXd& q, const Eigen::VectorXd& x, double beta,
                             Eigen::VectorXd* grad_x = nullptr) {
  const double k = atom_solve_k(q, x, 1.0 / beta);
  const Eigen::VectorXd xm = x.cwiseMin(k);
  const double mean = q.dot(xm);
  const Eigen::VectorXd centered = xm.array() - mean;
  const double var = q.dot(centered.cwiseProduct(centered));
  if (grad_x) *grad_x = beta * (xm.array() - k).matrix();
  return -mean + 0.5 * beta * var;
}

/// Entropic value on one atom with a max-shift; optionally the outcome
/// gradient z = -exp(-gamma x) / E_q[exp(-gamma x)].
inline double atom_entropic_value(const Eigen::VectorXd& q, const Eigen::VectorXd& x, double gamma,
                                  Eigen::VectorXd* grad_x = nullptr) {
  const double shift = (-gamma * x.array()).maxCoeff();
  const Eigen::ArrayXd e = (-gamma * x.array() - shift).exp();
  const double acc = (q.array() * e).sum();
  if (grad_x) *grad_x = (-e / acc).matrix();
  return (shift + std::log(acc)) / gamma;
}

}  // namespace detail

// ---- portfolio choice under monotone mean-variance -----------------------------

struct MMVSolution {
  RandomVariable x_star;
  PortfolioCoefficients alpha_star;
  ConditionalValue k_star;
  ConditionalValue value;            // risk of x_star per atom
  ConditionalValue price_residual;   // |pi(x_star) - 1| per atom
  double certificate_residual = 0.0; // first-order pricing identity defect
  bool converged = false;
  std::vector<int> iterations;       // per atom
};

/// Defect of the first-order pricing identity at a candidate optimizer x with
/// unit price: max over atoms and assets of
/// | E[-grad(x) y_j / r_f | F] - pi(y_j) |,
/// where grad is the monotone mean-variance gradient. Zero at any stationary
/// point of the budget-constrained problem; the multiplier is pinned to the
/// risk-free return because E[grad | F] = -1 and constants are attainable.
inline double optimality_pricing_residual(const MarketModel& m, const RiskAversion& beta,
                                          const RandomVariable& x, double price_tol = 1e-8) {
  const FiniteSpace& sp = m.space();
  const Partition& F = m.partition();
  const ConditionalValue px = price(m, x);
  for (std::size_t a = 0; a < px.size(); ++a)
    detail::require(std::fabs(px[a] - 1.0) <= price_tol,
                    "optimality_pricing_residual: candidate does not have unit price on atom " +
                        std::to_string(a));
  const ConditionalValue rf = risk_free_return(m);
  const RandomVariable grad = mmv_gradient(sp, F, x, beta);

  double worst = 0.0;
  for (std::size_t a = 0; a < F.atom_count(); ++a) {
    const auto& blk = m.atom_block(a);
    Eigen::VectorXd g(blk.outcomes.size());
    for (std::size_t r = 0; r < blk.outcomes.size(); ++r) g(r) = grad[blk.outcomes[r]];
    const Eigen::VectorXd lhs =
        blk.payoffs.transpose() * (blk.weights.cwiseProduct(-g / rf[a]));
    worst = std::max(worst, (lhs - blk.price_coeff).cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Minimizes the monotone mean-variance risk over attainable payoffs with unit
/// price, independently on every atom: projected gradient on the affine budget
/// slice with a Barzilai-Borwein trial step and monotone Armijo backtracking.
inline MMVSolution solve_mmv(const MarketModel& m, const RiskAversion& beta,
                             const SolveOptions& opts = {}) {
  const FiniteSpace& sp = m.space();
  const Partition& F = m.partition();
  detail::check_atom_dim(F, beta.level, "solve_mmv");
  risk_free_return(m);  // structural checks: unit payoff attainable, positive price

  MMVSolution sol;
  sol.x_star = RandomVariable(sp.outcome_count(), 0.0);
  sol.iterations.resize(F.atom_count(), 0);
  sol.converged = true;
  const std::size_t d = m.asset_count();
  std::vector<Eigen::VectorXd> alphas(F.atom_count());

  for (std::size_t a = 0; a < F.atom_count(); ++a) {
    const auto& blk = m.atom_block(a);
    const Eigen::VectorXd& c = blk.price_coeff;
    const double cc = c.squaredNorm();
    if (cc <= 0.0)
      throw InfeasibleError("solve_mmv: no portfolio attains unit price on atom " +
                            std::to_string(a));

    const Eigen::MatrixXd B = blk.weights.cwiseSqrt().asDiagonal() * blk.payoffs;
    const double smax = B.jacobiSvd().singularValues()(0);
    const double eta0 = 1.0 / (beta[a] * smax * smax + 1e-30);

    auto objective = [&](const Eigen::VectorXd& alpha, Eigen::VectorXd* grad) {
      Eigen::VectorXd gx;
      const double val =
          detail::atom_mmv_value(blk.weights, blk.payoffs * alpha, beta[a], grad ? &gx : nullptr);
      if (grad) *grad = blk.payoffs.transpose() * (blk.weights.cwiseProduct(gx));
      return val;
    };

    // The objective is quadratic on every region with a fixed shortfall set
    // {x < k}: there the truncation level is affine in alpha. Solving the
    // equality-constrained Newton system for the current region therefore
    // jumps to that region's exact minimizer, which finishes the solve once
    // projected-gradient steps have located the right region.
    auto region_newton = [&](const Eigen::VectorXd& alpha,
                             const Eigen::VectorXd& grad) -> std::optional<Eigen::VectorXd> {
      const Eigen::VectorXd x = blk.payoffs * alpha;
      const double k = detail::atom_solve_k(blk.weights, x, 1.0 / beta[a]);
      Eigen::VectorXd ws = Eigen::VectorXd::Zero(x.size());
      double mass = 0.0;
      for (Eigen::Index r = 0; r < x.size(); ++r)
        if (x(r) < k) {
          ws(r) = blk.weights(r);
          mass += blk.weights(r);
        }
      if (mass <= 0.0) return std::nullopt;
      const Eigen::VectorXd kappa = blk.payoffs.transpose() * ws / mass;
      const Eigen::VectorXd mu =
          blk.payoffs.transpose() * ws + (1.0 - mass) * kappa;  // gradient of E[x ^ k]
      const Eigen::MatrixXd hess =
          beta[a] * (blk.payoffs.transpose() * ws.asDiagonal() * blk.payoffs +
                     (1.0 - mass) * kappa * kappa.transpose() - mu * mu.transpose());
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(d + 1, d + 1);
      kkt.topLeftCorner(d, d) = hess;
      kkt.topRightCorner(d, 1) = c;
      kkt.bottomLeftCorner(1, d) = c.transpose();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d + 1);
      rhs.head(d) = -grad;
      const Eigen::VectorXd step = kkt.fullPivLu().solve(rhs);
      if (!step.allFinite()) return std::nullopt;
      return alpha + step.head(d);
    };

    Eigen::VectorXd alpha = c / cc;  // least-norm unit-price portfolio
    Eigen::VectorXd grad(d), prev_alpha, prev_proj;
    double fval = objective(alpha, &grad);
    bool atom_converged = false;
    bool have_prev = false;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
      Eigen::VectorXd proj = grad - (grad.dot(c) / cc) * c;
      // Stationarity is measured relative to the full gradient: at the optimum
      // the gradient is parallel to the price coefficients and the projection
      // cancels two vectors of that size, so the computed norm cannot drop
      // meaningfully below round-off at the gradient's own scale.
      if (proj.norm() <= opts.tol * (1.0 + grad.norm())) {
        atom_converged = true;
        break;
      }
      const double fnoise = 1e-14 * (1.0 + std::fabs(fval));
      // near-stationary: try to finish with the exact region minimizer
      if (proj.norm() <= 1e-4 * (1.0 + grad.norm())) {
        if (const auto cand = region_newton(alpha, grad)) {
          Eigen::VectorXd gcand(d);
          const double fcand = objective(*cand, &gcand);
          const Eigen::VectorXd pcand = gcand - (gcand.dot(c) / cc) * c;
          if (fcand <= fval + fnoise && pcand.norm() <= 0.5 * proj.norm()) {
            alpha = *cand;
            fval = fcand;
            grad = gcand;
            have_prev = false;  // the jump invalidates the quasi-Newton memory
            continue;
          }
        }
      }
      double eta = eta0;
      if (have_prev) {
        const Eigen::VectorXd s = alpha - prev_alpha;
        const Eigen::VectorXd y = proj - prev_proj;
        const double sy = s.dot(y);
        if (sy > 0.0) eta = std::min(std::max(s.squaredNorm() / sy, 1e-12), 1e12);
      }
      prev_alpha = alpha;
      prev_proj = proj;
      have_prev = true;
      const double slope = proj.squaredNorm();
      // Same endgame treatment as the entropic solver: once objective values
      // are flat to round-off, accept steps that shrink the projected
      // gradient instead of stalling the line search.
      bool stepped = false;
      for (int bt = 0; bt < 60; ++bt) {
        const Eigen::VectorXd cand = alpha - eta * proj;
        Eigen::VectorXd gcand(d);
        const double fcand = objective(cand, &gcand);
        bool accept = fcand <= fval - 1e-4 * eta * slope;
        if (!accept && fcand <= fval + fnoise) {
          const Eigen::VectorXd pcand = gcand - (gcand.dot(c) / cc) * c;
          accept = pcand.norm() <= 0.9 * proj.norm();
        }
        if (accept) {
          alpha = cand;
          fval = fcand;
          grad = gcand;
          stepped = true;
          break;
        }
        eta *= 0.5;
      }
      if (!stepped) break;  // line search exhausted; treat as stalled
    }
    sol.iterations[a] = it;
    sol.converged = sol.converged && atom_converged;
    alphas[a] = alpha;
    const Eigen::VectorXd xa = blk.payoffs * alpha;
    for (std::size_t r = 0; r < blk.outcomes.size(); ++r) sol.x_star[blk.outcomes[r]] = xa(r);
  }

  sol.alpha_star.alpha.assign(d, ConditionalValue(F.atom_count(), 0.0));
  for (std::size_t a = 0; a < F.atom_count(); ++a)
    for (std::size_t j = 0; j < d; ++j) sol.alpha_star.alpha[j][a] = alphas[a](j);
  sol.k_star = solve_kx(sp, F, sol.x_star, beta);
  sol.value = mmv(sp, F, sol.x_star, beta);
  const ConditionalValue px = price(m, sol.x_star);
  sol.price_residual = ConditionalValue(F.atom_count(), 0.0);
  for (std::size_t a = 0; a < F.atom_count(); ++a) sol.price_residual[a] = std::fabs(px[a] - 1.0);
  sol.certificate_residual = optimality_pricing_residual(m, beta, sol.x_star);
  return sol;
}

/// Gradient payoff and Riesz pricing density extracted from an optimizer of
/// the unit-price problem. The gradient beta (k - x)^+ does not depend on beta
/// at optimizers; its projection onto the payoff span, discounted by the
/// risk-free return, prices every asset.
struct PricingKernel {
  RandomVariable gradient;  // beta (k - x)^+ at the optimizer
  RandomVariable riesz;     // projection of gradient / r_f onto the payoff span
};

inline PricingKernel pricing_kernel(const MarketModel& m, const RiskAversion& beta,
                                    const RandomVariable& x_star, double tol = 1e-8) {
  const double resid = optimality_pricing_residual(m, beta, x_star);
  detail::require(resid <= tol, "pricing_kernel: candidate fails the first-order pricing "
                                "identity (residual " +
                                    std::to_string(resid) + ")");
  PricingKernel out;
  out.gradient = -1.0 * mmv_gradient(m.space(), m.partition(), x_star, beta);
  const ConditionalValue rf = risk_free_return(m);
  RandomVariable discounted(out.gradient.size(), 0.0);
  for (std::size_t i = 0; i < discounted.size(); ++i)
    discounted[i] = out.gradient[i] / rf[m.partition().atom_of(i)];
  out.riesz = project_onto_M(m, discounted);
  return out;
}

// ---- constrained entropic problem ----------------------------------------------

/// Constraints for the entropic portfolio problem: unit price, conditional
/// mean w, and conditional p-norm at most r, all per atom.
struct EntropicProblemSpec {
  ConditionalValue w;
  ConditionalValue r;
  double p = 2.0;

  void validate(const Partition& F) const {
    detail::check_atom_dim(F, w, "EntropicProblemSpec.w");
    detail::check_atom_dim(F, r, "EntropicProblemSpec.r");
    for (double v : r.values)
      detail::require(v > 0.0 && std::isfinite(v), "EntropicProblemSpec: r must be finite and > 0");
    detail::require(p > 1.0 && !std::isinf(p),
                    "EntropicProblemSpec: p must lie strictly between 1 and infinity");
  }
};

namespace detail {

/// Affine reduction of one atom's constraints: portfolios alpha_p + N u sweep
/// the solutions of price(x) = 1, E[x|F] = w, and the payoff directions are
/// re-expressed through an L2(atom)-orthonormal basis xi so the reduced p = 2
/// geometry is exactly Euclidean.
struct AtomReduction {
  bool consistent = false;
  Eigen::VectorXd alpha_p;  // particular portfolio
  Eigen::MatrixXd coeff_basis;  // d x kdim, maps u to portfolio space
  Eigen::VectorXd x_p;      // payoff of alpha_p on the atom
  Eigen::MatrixXd xi;       // |A| x kdim, L2-orthonormal columns
};

inline AtomReduction reduce_atom_constraints(const MarketModel::AtomBlock& blk, double w_target) {
  const Eigen::Index d = blk.payoffs.cols();
  Eigen::MatrixXd A(2, d);
  A.row(0) = blk.price_coeff.transpose();
  A.row(1) = blk.expect_coeff.transpose();
  Eigen::Vector2d rhs(1.0, w_target);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  Eigen::Index rank = 0;
  Eigen::VectorXd alpha_p = Eigen::VectorXd::Zero(d);
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) <= kRankThreshold * smax || sv(k) == 0.0) continue;
    rank = k + 1;
    alpha_p += (svd.matrixU().col(k).dot(rhs) / sv(k)) * svd.matrixV().col(k);
  }

  AtomReduction red;
  red.alpha_p = alpha_p;
  red.consistent = (A * alpha_p - rhs).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff());
  if (!red.consistent) return red;

  const Eigen::MatrixXd N = svd.matrixV().rightCols(d - rank);  // nullspace of A
  const Eigen::MatrixXd Z = blk.payoffs * N;
  red.x_p = blk.payoffs * alpha_p;
  if (Z.cols() == 0) {
    red.coeff_basis = Eigen::MatrixXd::Zero(d, 0);
    red.xi = Eigen::MatrixXd::Zero(blk.payoffs.rows(), 0);
    return red;
  }
  const Eigen::MatrixXd ZW = blk.weights.cwiseSqrt().asDiagonal() * Z;
  Eigen::JacobiSVD<Eigen::MatrixXd> zsvd(ZW, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double zmax = zsvd.singularValues().size() ? zsvd.singularValues()(0) : 0.0;
  Eigen::Index kept = 0;
  for (Eigen::Index k = 0; k < zsvd.singularValues().size(); ++k)
    if (zmax > 0.0 && zsvd.singularValues()(k) > kRankThreshold * zmax) kept = k + 1;
  red.coeff_basis.resize(d, kept);
  red.xi.resize(blk.payoffs.rows(), kept);
  for (Eigen::Index k = 0; k < kept; ++k) {
    const double s = zsvd.singularValues()(k);
    red.coeff_basis.col(k) = N * zsvd.matrixV().col(k) / s;
    red.xi.col(k) = Z * zsvd.matrixV().col(k) / s;
  }
  return red;
}

/// The constraint set {u : |||x_p + xi u|||_p <= r} of one atom, with exact
/// closed-form projection for p = 2 and a KKT bisection otherwise.
class AtomBall {
 public:
  AtomBall(const Eigen::VectorXd& weights, Eigen::VectorXd x_p, Eigen::MatrixXd xi, double p,
           double radius)
      : q_(weights), x_p_(std::move(x_p)), xi_(std::move(xi)), p_(p), r_(radius) {
    center_ = -xi_.transpose() * q_.cwiseProduct(x_p_);  // minus L2 coordinates of x_p
    if (p_ == 2.0) {
      const double xpsq = q_.dot(x_p_.cwiseProduct(x_p_));
      s0_ = std::max(xpsq - center_.squaredNorm(), 0.0);
    }
  }

  double norm_at(const Eigen::VectorXd& u) const {
    const Eigen::ArrayXd x = (x_p_ + xi_ * u).array();
    return std::pow((q_.array() * x.abs().pow(p_)).sum(), 1.0 / p_);
  }

  /// Minimal attainable norm over u and a point attaining it.
  std::pair<double, Eigen::VectorXd> min_norm_point() const {
    if (xi_.cols() == 0) return {norm_at(Eigen::VectorXd::Zero(0)), Eigen::VectorXd::Zero(0)};
    if (p_ == 2.0) return {std::sqrt(s0_), center_};
    Eigen::VectorXd u = center_;
    const auto h = [&](const Eigen::VectorXd& v, Eigen::VectorXd* g) { return eval_h(v, g); };
    minimize_unconstrained(h, u, 1e-13, 5000);
    return {std::pow(eval_h(u, nullptr), 1.0 / p_), u};
  }

  bool contains(const Eigen::VectorXd& u, double slack = 1e-12) const {
    return norm_at(u) <= r_ + slack;
  }

  Eigen::VectorXd project(const Eigen::VectorXd& u) const {
    if (xi_.cols() == 0) return u;
    if (p_ == 2.0) {
      const double rad2 = r_ * r_ - s0_;
      const double rad = std::sqrt(std::max(rad2, 0.0));
      const Eigen::VectorXd delta = u - center_;
      const double len = delta.norm();
      if (len <= rad) return u;
      return center_ + (rad / len) * delta;
    }
    const double rp = std::pow(r_, p_);
    if (eval_h(u, nullptr) <= rp) return u;

    // prox bisection: v(lam) = argmin 1/2 |v - u|^2 + lam h(v) moves
    // continuously and h(v(lam)) decreases in lam, so bracket the active-ball
    // multiplier by doubling and bisect, warm-starting each prox solve from
    // the previous point.
    Eigen::VectorXd v = u;
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
      prox_newton(u, hi, v);
      if (eval_h(v, nullptr) <= rp) break;
      lo = hi;
      hi *= 2.0;
    }
    const double tol_ball = 1e-13 * std::max(1.0, rp);
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      prox_newton(u, mid, v);
      const double hval = eval_h(v, nullptr);
      if (std::fabs(hval - rp) <= tol_ball) return v;
      (hval > rp ? lo : hi) = mid;
    }
    prox_newton(u, hi, v);  // guaranteed inside up to tolerance
    return v;
  }

 private:
  double eval_h(const Eigen::VectorXd& u, Eigen::VectorXd* grad) const {
    const Eigen::ArrayXd x = (x_p_ + xi_ * u).array();
    const double h = (q_.array() * x.abs().pow(p_)).sum();
    if (grad) {
      const Eigen::ArrayXd gx = p_ * x.abs().pow(p_ - 1.0) * x.sign();
      *grad = xi_.transpose() * (q_.array() * gx).matrix();
    }
    return h;
  }

  /// Damped Newton solve of min_w 1/2 |w - u|^2 + lam h(w), warm-started from
  /// the incoming w. The objective is 1-strongly convex and the reduced
  /// dimension is small, so a handful of Hessian solves reach round-off.
  void prox_newton(const Eigen::VectorXd& u, double lam, Eigen::VectorXd& w) const {
    const Eigen::Index k = xi_.cols();
    const double grad_tol = 1e-14 * (1.0 + u.norm());
    for (int it = 0; it < 100; ++it) {
      const Eigen::ArrayXd z = (x_p_ + xi_ * w).array();
      const Eigen::ArrayXd az = z.abs().max(1e-300);  // keep p < 2 weights finite
      const Eigen::VectorXd gh =
          xi_.transpose() * (q_.array() * p_ * az.pow(p_ - 1.0) * z.sign()).matrix();
      const Eigen::VectorXd grad = (w - u) + lam * gh;
      if (grad.norm() <= grad_tol) return;
      const Eigen::ArrayXd curv = q_.array() * p_ * (p_ - 1.0) * az.pow(p_ - 2.0);
      const Eigen::MatrixXd H =
          Eigen::MatrixXd::Identity(k, k) +
          lam * (xi_.transpose() * curv.matrix().asDiagonal() * xi_);
      const Eigen::VectorXd step = H.ldlt().solve(grad);
      const double hval = (q_.array() * z.abs().pow(p_)).sum();
      const double phi0 = 0.5 * (w - u).squaredNorm() + lam * hval;
      const double slope = grad.dot(step);
      const double gnorm = grad.norm();
      double t = 1.0;
      bool stepped = false;
      for (int bt = 0; bt < 60; ++bt) {
        const Eigen::VectorXd cand = w - t * step;
        // Armijo on the prox objective far out; once its values are flat to
        // round-off, a shrinking gradient norm still certifies progress
        // because the objective is 1-strongly convex.
        const Eigen::ArrayXd zc = (x_p_ + xi_ * cand).array();
        const Eigen::ArrayXd azc = zc.abs().max(1e-300);
        const Eigen::VectorXd ghc =
            xi_.transpose() * (q_.array() * p_ * azc.pow(p_ - 1.0) * zc.sign()).matrix();
        const double phic = 0.5 * (cand - u).squaredNorm() + lam * (q_.array() * zc.abs().pow(p_)).sum();
        const double gc = ((cand - u) + lam * ghc).norm();
        if (phic <= phi0 - 1e-4 * t * slope || gc <= (1.0 - 1e-4 * t) * gnorm) {
          w = cand;
          stepped = true;
          break;
        }
        t *= 0.5;
      }
      if (!stepped) return;
    }
  }

  /// BB + Armijo descent for smooth convex objectives in the reduced space.
  template <class Fn>
  static void minimize_unconstrained(const Fn& f, Eigen::VectorXd& u, double grad_tol,
                                     int max_iter) {
    Eigen::VectorXd g(u.size()), prev_u, prev_g;
    double val = f(u, &g);
    for (int it = 0; it < max_iter; ++it) {
      if (g.norm() <= grad_tol) return;
      double eta = 1.0;
      if (it > 0) {
        const Eigen::VectorXd s = u - prev_u;
        const Eigen::VectorXd y = g - prev_g;
        const double sy = s.dot(y);
        if (sy > 0.0) eta = std::min(std::max(s.squaredNorm() / sy, 1e-14), 1e14);
      }
      prev_u = u;
      prev_g = g;
      const double slope = g.squaredNorm();
      bool stepped = false;
      for (int bt = 0; bt < 80; ++bt) {
        const Eigen::VectorXd cand = u - eta * g;
        Eigen::VectorXd gc(u.size());
        const double fc = f(cand, &gc);
        if (fc <= val - 1e-4 * eta * slope) {
          u = cand;
          val = fc;
          g = gc;
          stepped = true;
          break;
        }
        eta *= 0.5;
      }
      if (!stepped) return;
    }
  }

  Eigen::VectorXd q_, x_p_;
  Eigen::MatrixXd xi_;
  double p_ = 2.0, r_ = 1.0;
  Eigen::VectorXd center_;  // the p = 2 minimal-norm coordinates, start point otherwise
  double s0_ = 0.0;         // squared norm of the part of x_p outside span(xi), p = 2 only
};

}  // namespace detail

/// Per-atom feasibility of the entropic constraints: whether the equality
/// system is solvable at all and the minimal p-norm over its solutions.
struct FeasibilityReport {
  std::vector<bool> feasible;
  std::vector<bool> consistent;  // price and mean equalities solvable
  ConditionalValue min_norm;     // minimal |||x|||_p subject to the equalities

  bool all_feasible() const {
    for (bool b : feasible)
      if (!b) return false;
    return true;
  }
};

inline FeasibilityReport feasibility_check(const MarketModel& m, const EntropicProblemSpec& prob) {
  prob.validate(m.partition());
  const std::size_t na = m.partition().atom_count();
  FeasibilityReport rep;
  rep.feasible.resize(na, false);
  rep.consistent.resize(na, false);
  rep.min_norm = ConditionalValue(na, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t a = 0; a < na; ++a) {
    const auto& blk = m.atom_block(a);
    const auto red = detail::reduce_atom_constraints(blk, prob.w[a]);
    rep.consistent[a] = red.consistent;
    if (!red.consistent) continue;
    const detail::AtomBall ball(blk.weights, red.x_p, red.xi, prob.p, prob.r[a]);
    rep.min_norm[a] = ball.min_norm_point().first;
    rep.feasible[a] = rep.min_norm[a] <= prob.r[a] + 1e-12 * (1.0 + prob.r[a]);
  }
  return rep;
}

struct EntropicSolution {
  RandomVariable x_star;
  PortfolioCoefficients alpha_star;
  ConditionalValue value;          // optimal entropic risk per atom
  ConditionalValue price_residual;
  ConditionalValue mean_residual;
  ConditionalValue norm_slack;     // max(0, |||x|||_p - r) per atom
  double starts_agreement = 0.0;   // max pairwise distance among multi-start optimizers
  bool converged = false;
  std::vector<int> iterations;     // per atom, winning start
};

/// Minimizes the entropic risk over attainable payoffs with unit price,
/// conditional mean w, and conditional p-norm at most r. The two equality
/// constraints are eliminated per atom through an SVD reduction (rank
/// deficiency is fine as long as the system stays consistent), leaving a
/// projected-gradient problem over a convex norm ball in at most d - rank
/// orthonormal coordinates. Multi-start from random feasible points; the
/// reduced objective is strictly convex on the consistent slice, so all
/// starts must agree.
inline EntropicSolution solve_entropic(const MarketModel& m, const RiskAversion& gamma,
                                       const EntropicProblemSpec& prob,
                                       const SolveOptions& opts = {}) {
  const FiniteSpace& sp = m.space();
  const Partition& F = m.partition();
  prob.validate(F);
  detail::check_atom_dim(F, gamma.level, "solve_entropic");
  detail::require(opts.starts >= 1, "solve_entropic: at least one start required");

  const std::size_t d = m.asset_count();
  const std::size_t na = F.atom_count();
  EntropicSolution sol;
  sol.x_star = RandomVariable(sp.outcome_count(), 0.0);
  sol.iterations.resize(na, 0);
  sol.converged = true;
  sol.starts_agreement = 0.0;
  std::vector<Eigen::VectorXd> alphas(na);

  for (std::size_t a = 0; a < na; ++a) {
    const auto& blk = m.atom_block(a);
    const auto red = detail::reduce_atom_constraints(blk, prob.w[a]);
    if (!red.consistent)
      throw InfeasibleError("solve_entropic: price and mean constraints are inconsistent on atom " +
                            std::to_string(a));
    const detail::AtomBall ball(blk.weights, red.x_p, red.xi, prob.p, prob.r[a]);
    const auto [min_norm, min_u] = ball.min_norm_point();
    if (min_norm > prob.r[a] + 1e-12 * (1.0 + prob.r[a]))
      throw InfeasibleError("solve_entropic: norm bound " + std::to_string(prob.r[a]) +
                            " is below the minimal attainable norm " + std::to_string(min_norm) +
                            " on atom " + std::to_string(a));

    const Eigen::Index kdim = red.xi.cols();
    auto objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
      Eigen::VectorXd z;
      const double val = detail::atom_entropic_value(blk.weights, red.x_p + red.xi * u, gamma[a],
                                                     grad ? &z : nullptr);
      if (grad) *grad = red.xi.transpose() * (blk.weights.cwiseProduct(z));
      return val;
    };

    // curvature of the reduced objective is at most gamma in the orthonormal
    // coordinates, which fixes a safe initial step
    const double eta0 = 1.0 / (gamma[a] + 1.0);

    std::vector<Eigen::VectorXd> finishers;
    Eigen::VectorXd best_u;
    double best_val = std::numeric_limits<double>::infinity();
    int best_iters = 0;
    bool best_converged = false;

    for (int s = 0; s < opts.starts; ++s) {
      Eigen::VectorXd u;
      if (s == 0) {
        u = ball.project(Eigen::VectorXd::Zero(kdim));
      } else {
        std::mt19937_64 gen(opts.seed + 1000003ULL * a + 7919ULL * static_cast<std::uint64_t>(s));
        Eigen::VectorXd dir(kdim);
        for (Eigen::Index k = 0; k < kdim; ++k) dir(k) = rng::normal(gen);
        u = ball.project(min_u + prob.r[a] * dir);
      }

      Eigen::VectorXd grad(kdim), prev_u, prev_gm;
      double fval = objective(u, &grad);
      bool run_converged = (kdim == 0);
      int it = 0;
      for (; it < opts.max_iter && kdim > 0; ++it) {
        const Eigen::VectorXd gm = u - ball.project(u - grad);  // gradient mapping, unit step
        if (gm.norm() <= opts.tol) {
          run_converged = true;
          break;
        }
        double eta = eta0;
        if (it > 0) {
          const Eigen::VectorXd sv = u - prev_u;
          const Eigen::VectorXd yv = gm - prev_gm;
          const double sy = sv.dot(yv);
          if (sy > 0.0) eta = std::min(std::max(sv.squaredNorm() / sy, 1e-12), 1e12);
        }
        prev_u = u;
        prev_gm = gm;
        // Near the optimum the objective is flat to round-off, so Armijo alone
        // stalls; a strictly shrinking gradient mapping (with the value pinned
        // to within noise) keeps certified progress going to tight tolerances.
        const double fnoise = 1e-14 * (1.0 + std::fabs(fval));
        bool stepped = false;
        for (int bt = 0; bt < 60; ++bt) {
          const Eigen::VectorXd cand = ball.project(u - eta * grad);
          Eigen::VectorXd gcand(kdim);
          const double fcand = objective(cand, &gcand);
          bool accept = fcand <= fval - 1e-4 * grad.dot(u - cand);
          if (!accept && fcand <= fval + fnoise)
            accept = (cand - ball.project(cand - gcand)).norm() <= 0.9 * gm.norm();
          if (accept) {
            u = cand;
            fval = fcand;
            grad = gcand;
            stepped = true;
            break;
          }
          eta *= 0.5;
        }
        if (!stepped) break;
      }

      if (run_converged) finishers.push_back(u);
      if (fval < best_val) {
        best_val = fval;
        best_u = u;
        best_iters = it;
        best_converged = run_converged;
      }
    }

    for (std::size_t i = 0; i < finishers.size(); ++i)
      for (std::size_t j = i + 1; j < finishers.size(); ++j) {
        const Eigen::VectorXd dx = red.xi * (finishers[i] - finishers[j]);
        sol.starts_agreement =
            std::max(sol.starts_agreement, dx.size() ? dx.cwiseAbs().maxCoeff() : 0.0);
      }

    sol.converged = sol.converged && best_converged;
    sol.iterations[a] = best_iters;
    sol.value.values.push_back(best_val);
    alphas[a] = red.alpha_p + red.coeff_basis * best_u;
    const Eigen::VectorXd xa = red.x_p + red.xi * best_u;
    for (std::size_t r = 0; r < blk.outcomes.size(); ++r) sol.x_star[blk.outcomes[r]] = xa(r);
  }

  sol.alpha_star.alpha.assign(d, ConditionalValue(na, 0.0));
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t j = 0; j < d; ++j) sol.alpha_star.alpha[j][a] = alphas[a](j);

  const ConditionalValue px = price(m, sol.x_star);
  const ConditionalValue mx = cond_expect(sp, F, sol.x_star);
  const ConditionalValue nx = cond_norm(sp, F, sol.x_star, prob.p);
  sol.price_residual = ConditionalValue(na, 0.0);
  sol.mean_residual = ConditionalValue(na, 0.0);
  sol.norm_slack = ConditionalValue(na, 0.0);
  for (std::size_t a = 0; a < na; ++a) {
    sol.price_residual[a] = std::fabs(px[a] - 1.0);
    sol.mean_residual[a] = std::fabs(mx[a] - prob.w[a]);
    sol.norm_slack[a] = std::max(nx[a] - prob.r[a], 0.0);
  }
  return sol;
}

// ---- grid oracle ----------------------------------------------------------------

/// Dense grid description for the brute-force oracle; one or two dimensions.
struct GridSpec {
  std::vector<double> lo, hi;
  std::vector<std::size_t> points;
};

struct GridMinimum {
  std::vector<double> arg;
  double value = 0.0;
};

/// Exhaustive minimization over a dense grid. Deliberately simple; used as an
/// independent cross-check of the reduced solvers in tests.
inline GridMinimum brute_force_minimize(const std::function<double(const std::vector<double>&)>& f,
                                        const GridSpec& grid) {
  const std::size_t dims = grid.lo.size();
  detail::require(dims >= 1 && dims <= 2, "brute_force_minimize: one or two dimensions only");
  detail::require(grid.hi.size() == dims && grid.points.size() == dims,
                  "brute_force_minimize: inconsistent grid description");
  for (std::size_t k = 0; k < dims; ++k) {
    detail::require(grid.points[k] >= 2, "brute_force_minimize: at least two points per axis");
    detail::require(grid.hi[k] > grid.lo[k], "brute_force_minimize: empty axis range");
  }

  GridMinimum best;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<double> arg(dims, 0.0);
  const std::size_t n0 = grid.points[0];
  const std::size_t n1 = dims == 2 ? grid.points[1] : 1;
  for (std::size_t i = 0; i < n0; ++i) {
    arg[0] = grid.lo[0] + (grid.hi[0] - grid.lo[0]) * static_cast<double>(i) /
                              static_cast<double>(n0 - 1);
    for (std::size_t j = 0; j < n1; ++j) {
      if (dims == 2)
        arg[1] = grid.lo[1] + (grid.hi[1] - grid.lo[1]) * static_cast<double>(j) /
                                  static_cast<double>(n1 - 1);
      const double v = f(arg);
      if (v < best.value) {
        best.value = v;
        best.arg = arg;
      }
    }
  }
  return best;
}

}  // namespace condrisk
