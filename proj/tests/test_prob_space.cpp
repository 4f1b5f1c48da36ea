#include "condrisk/prob_space.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace condrisk;

namespace {

const std::vector<double> kQuarter{0.25, 0.25, 0.25, 0.25};
const std::vector<std::size_t> kPairs{0, 0, 1, 1};

TEST(FiniteSpace, RejectsInvalidProbabilities) {
  EXPECT_THROW(FiniteSpace(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(FiniteSpace({0.5, 0.5, 0.0}), std::invalid_argument);
  EXPECT_THROW(FiniteSpace({0.7, -0.2, 0.5}), std::invalid_argument);
  EXPECT_THROW(FiniteSpace({0.5, 0.6}), std::invalid_argument);
  EXPECT_NO_THROW(FiniteSpace({0.5, 0.25, 0.25}));
}

TEST(FiniteSpace, AcceptsLargeUniformSpaces) {
  const std::size_t n = 100000;
  std::vector<double> p(n, 1.0 / static_cast<double>(n));
  EXPECT_NO_THROW(FiniteSpace{p});
}

TEST(Partition, RejectsBadAtomMaps) {
  EXPECT_THROW(Partition({0, 0, 2}, 2), std::invalid_argument);  // index out of range
  EXPECT_THROW(Partition({0, 0, 0}, 2), std::invalid_argument);  // atom 1 empty
  EXPECT_THROW(Partition({}, 1), std::invalid_argument);
  const Partition F({0, 1, 0}, 2);
  EXPECT_EQ(F.atom_count(), 2u);
  EXPECT_EQ(F.members(0).size(), 2u);
  EXPECT_EQ(F.atom_of(1), 1u);
}

TEST(Partition, TrivialHasOneAtom) {
  const Partition F = Partition::trivial(5);
  EXPECT_EQ(F.atom_count(), 1u);
  EXPECT_EQ(F.members(0).size(), 5u);
}

TEST(CondExpect, MatchesHandComputedValues) {
  const FiniteSpace sp(kQuarter);
  const Partition F(kPairs, 2);
  const ConditionalValue m = cond_expect(sp, F, RandomVariable({1.0, 3.0, 2.0, 6.0}));
  EXPECT_NEAR(m[0], 2.0, 1e-12);
  EXPECT_NEAR(m[1], 4.0, 1e-12);

  const FiniteSpace spw({0.1, 0.2, 0.3, 0.4});
  const ConditionalValue mw = cond_expect(spw, F, RandomVariable({1.0, 3.0, 2.0, 6.0}));
  EXPECT_NEAR(mw[0], 7.0 / 3.0, 1e-12);   // (0.1*1 + 0.2*3) / 0.3
  EXPECT_NEAR(mw[1], 30.0 / 7.0, 1e-12);  // (0.3*2 + 0.4*6) / 0.7
}

TEST(CondExpect, RejectsDimensionMismatch) {
  const FiniteSpace sp(kQuarter);
  const Partition F(kPairs, 2);
  EXPECT_THROW(cond_expect(sp, F, RandomVariable({1.0, 2.0})), std::invalid_argument);
  EXPECT_THROW(cond_expect(sp, Partition({0, 0, 1}, 2), RandomVariable({1.0, 2.0, 3.0})),
               std::invalid_argument);
}

TEST(CondExpect, TowerAndLinearityOnRandomInstances) {
  std::mt19937_64 gen(11);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 3 + rng::index(gen, 20);
    const std::size_t na = 1 + rng::index(gen, std::min<std::size_t>(n, 5));
    const FiniteSpace sp = oracles::random_space(gen, n);
    const Partition F = oracles::random_partition(gen, n, na);
    const Partition trivial = Partition::trivial(n);
    const RandomVariable x = oracles::random_rv(gen, n, 2.0);
    const RandomVariable y = oracles::random_rv(gen, n, 1.5);

    // tower: E[ E[x|F] ] = E[x]
    const double lhs = cond_expect(sp, trivial, lift(F, cond_expect(sp, F, x)))[0];
    const double rhs = cond_expect(sp, trivial, x)[0];
    EXPECT_NEAR(lhs, rhs, 1e-12);

    // linearity with F-measurable coefficients
    ConditionalValue c(na, 0.0);
    for (std::size_t a = 0; a < na; ++a) c[a] = rng::normal(gen);
    const ConditionalValue left = cond_expect(sp, F, lift(F, c) * x + y);
    const ConditionalValue right = c * cond_expect(sp, F, x) + cond_expect(sp, F, y);
    for (std::size_t a = 0; a < na; ++a) EXPECT_NEAR(left[a], right[a], 1e-11);
  }
}

TEST(CondVariance, MatchesHandComputedValues) {
  const FiniteSpace sp(kQuarter);
  const Partition F(kPairs, 2);
  const ConditionalValue v = cond_variance(sp, F, RandomVariable({1.0, 3.0, 2.0, 6.0}));
  EXPECT_NEAR(v[0], 1.0, 1e-12);
  EXPECT_NEAR(v[1], 4.0, 1e-12);
}

TEST(CondVariance, NonnegativeAndShiftInvariant) {
  std::mt19937_64 gen(12);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 4 + rng::index(gen, 16);
    const std::size_t na = 1 + rng::index(gen, 4);
    const FiniteSpace sp = oracles::random_space(gen, n);
    const Partition F = oracles::random_partition(gen, n, na);
    const RandomVariable x = oracles::random_rv(gen, n, 3.0);
    ConditionalValue m(na, 0.0);
    for (std::size_t a = 0; a < na; ++a) m[a] = 5.0 * rng::normal(gen);
    const ConditionalValue v = cond_variance(sp, F, x);
    const ConditionalValue vs = cond_variance(sp, F, x + lift(F, m));
    for (std::size_t a = 0; a < na; ++a) {
      EXPECT_GE(v[a], 0.0);
      EXPECT_NEAR(v[a], vs[a], 1e-10 * (1.0 + std::fabs(v[a])));
    }
  }
}

TEST(CondNorm, MatchesHandComputedValues) {
  const FiniteSpace sp({0.5, 0.5});
  const Partition F = Partition::trivial(2);
  const RandomVariable x({0.0, 1.0});
  EXPECT_NEAR(cond_norm(sp, F, x, 2.0)[0], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(cond_norm(sp, F, x, 1.0)[0], 0.5, 1e-12);
  EXPECT_NEAR(cond_norm(sp, F, x, std::numeric_limits<double>::infinity())[0], 1.0, 1e-12);
}

TEST(CondNorm, RejectsExponentBelowOne) {
  const FiniteSpace sp({0.5, 0.5});
  const Partition F = Partition::trivial(2);
  EXPECT_THROW(cond_norm(sp, F, RandomVariable({1.0, 2.0}), 0.5), std::invalid_argument);
  EXPECT_THROW(cond_norm(sp, F, RandomVariable({1.0, 2.0}), std::nan("")),
               std::invalid_argument);
}

TEST(CondNorm, MonotoneInExponentAndSubadditive) {
  std::mt19937_64 gen(13);
  const double inf = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 4 + rng::index(gen, 16);
    const std::size_t na = 1 + rng::index(gen, 4);
    const FiniteSpace sp = oracles::random_space(gen, n);
    const Partition F = oracles::random_partition(gen, n, na);
    const RandomVariable x = oracles::random_rv(gen, n, 2.0);
    const RandomVariable y = oracles::random_rv(gen, n, 2.0);
    const double ps[4] = {1.0, 2.0, 4.0, inf};
    for (int i = 0; i + 1 < 4; ++i) {
      const ConditionalValue lo = cond_norm(sp, F, x, ps[i]);
      const ConditionalValue hi = cond_norm(sp, F, x, ps[i + 1]);
      for (std::size_t a = 0; a < na; ++a) EXPECT_LE(lo[a], hi[a] + 1e-10);
    }
    for (double p : {1.5, 2.0, 3.0}) {
      const ConditionalValue s = cond_norm(sp, F, x + y, p);
      const ConditionalValue nx = cond_norm(sp, F, x, p);
      const ConditionalValue ny = cond_norm(sp, F, y, p);
      for (std::size_t a = 0; a < na; ++a) EXPECT_LE(s[a], nx[a] + ny[a] + 1e-10);
    }
  }
}

TEST(Lift, RoundTripsThroughCondExpect) {
  const FiniteSpace sp({0.1, 0.2, 0.3, 0.4});
  const Partition F(kPairs, 2);
  const ConditionalValue c({-2.0, 7.5});
  const RandomVariable lifted = lift(F, c);
  EXPECT_EQ(lifted[0], -2.0);
  EXPECT_EQ(lifted[1], -2.0);
  EXPECT_EQ(lifted[2], 7.5);
  EXPECT_EQ(lifted[3], 7.5);
  const ConditionalValue back = cond_expect(sp, F, lifted);
  EXPECT_NEAR(back[0], -2.0, 1e-12);
  EXPECT_NEAR(back[1], 7.5, 1e-12);
}

TEST(Lattice, PointwiseOperations) {
  const RandomVariable x({1.0, -2.0, 3.0});
  const RandomVariable y({0.0, 5.0, 3.0});
  const RandomVariable mn = minimum(x, y);
  const RandomVariable mx = maximum(x, y);
  const RandomVariable pp = pos_part(x);
  EXPECT_EQ(mn[0], 0.0);
  EXPECT_EQ(mn[1], -2.0);
  EXPECT_EQ(mx[1], 5.0);
  EXPECT_EQ(pp[1], 0.0);
  EXPECT_EQ(pp[2], 3.0);
  EXPECT_EQ((x * y)[1], -10.0);
  EXPECT_THROW(minimum(x, RandomVariable({1.0})), std::invalid_argument);
}

TEST(CauchySchwarz, HoldsOnRandomInstances) {
  std::mt19937_64 gen(14);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 4 + rng::index(gen, 16);
    const std::size_t na = 1 + rng::index(gen, 4);
    const FiniteSpace sp = oracles::random_space(gen, n);
    const Partition F = oracles::random_partition(gen, n, na);
    const RandomVariable x = oracles::random_rv(gen, n, 2.0);
    const RandomVariable y = oracles::random_rv(gen, n, 2.0);
    const ConditionalValue cross = cond_expect(sp, F, x * y);
    const ConditionalValue nx = cond_norm(sp, F, x, 2.0);
    const ConditionalValue ny = cond_norm(sp, F, y, 2.0);
    for (std::size_t a = 0; a < na; ++a)
      EXPECT_LE(std::fabs(cross[a]), nx[a] * ny[a] + 1e-10 * (1.0 + nx[a] * ny[a]));
  }
}

TEST(Colinearity, RecoversAtomwiseFactors) {
  const FiniteSpace sp({0.1, 0.2, 0.3, 0.4});
  const Partition F(kPairs, 2);
  const RandomVariable y({1.0, -2.0, 0.5, 3.0});
  RandomVariable x(4, 0.0);
  x[0] = 3.0 * y[0];
  x[1] = 3.0 * y[1];
  x[2] = -2.0 * y[2];
  x[3] = -2.0 * y[3];
  const ColinearityResult res = colinearity_extract(sp, F, x, y);
  ASSERT_TRUE(res.ok);
  EXPECT_NEAR(res.alpha[0], 3.0, 1e-12);
  EXPECT_NEAR(res.alpha[1], -2.0, 1e-12);
}

TEST(Colinearity, ZeroBlockGivesZeroFactor) {
  const FiniteSpace sp({0.25, 0.25, 0.25, 0.25});
  const Partition F(kPairs, 2);
  const RandomVariable y({1.0, 2.0, 1.0, -1.0});
  const RandomVariable x({0.0, 0.0, 5.0, -5.0});
  const ColinearityResult res = colinearity_extract(sp, F, x, y);
  ASSERT_TRUE(res.ok);
  EXPECT_EQ(res.alpha[0], 0.0);
  EXPECT_NEAR(res.alpha[1], 5.0, 1e-12);
}

TEST(Colinearity, DetectsStrictInequality) {
  const FiniteSpace sp({0.25, 0.25, 0.25, 0.25});
  const Partition F = Partition::trivial(4);
  // orthogonal pair: Cauchy-Schwarz is strict
  const RandomVariable x({1.0, 1.0, -1.0, -1.0});
  const RandomVariable y({1.0, -1.0, 1.0, -1.0});
  const ColinearityResult res = colinearity_extract(sp, F, x, y);
  EXPECT_FALSE(res.ok);
  EXPECT_FALSE(res.reason.empty());
}

TEST(Colinearity, RejectsVanishingY) {
  const FiniteSpace sp({0.25, 0.25, 0.25, 0.25});
  const Partition F(kPairs, 2);
  const RandomVariable y({0.0, 0.0, 1.0, 1.0});
  const RandomVariable x({0.0, 0.0, 1.0, 1.0});
  EXPECT_THROW(colinearity_extract(sp, F, x, y), std::invalid_argument);
}

}  // namespace
