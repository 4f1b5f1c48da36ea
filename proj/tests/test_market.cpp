#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "condrisk/market.hpp"
#include "oracles.hpp"

using namespace condrisk;

namespace {

// Two atoms of two outcomes each; the two assets span every atom completely.
MarketModel demo_market() {
  const FiniteSpace sp({0.2, 0.3, 0.3, 0.2});
  const Partition F(std::vector<std::size_t>{0, 0, 1, 1}, 2);
  std::vector<RandomVariable> payoffs;
  payoffs.emplace_back(4, 1.0);
  payoffs.push_back(RandomVariable{0.5, 1.5, 2.0, 0.4});
  return MarketModel(sp, F, payoffs, RandomVariable{1.1, 0.9, 1.2, 0.8});
}

// Two atoms of three outcomes each with two assets: the span is a proper
// subspace, so attainability can fail and projections are nontrivial.
MarketModel tall_market() {
  const FiniteSpace sp(std::vector<double>(6, 1.0 / 6.0));
  const Partition F(std::vector<std::size_t>{0, 0, 0, 1, 1, 1}, 2);
  std::vector<RandomVariable> payoffs;
  payoffs.emplace_back(6, 1.0);
  payoffs.push_back(RandomVariable{0.0, 1.0, 2.0, 1.0, 3.0, 5.0});
  return MarketModel(sp, F, payoffs, RandomVariable{1.2, 0.9, 1.0, 0.8, 1.1, 1.05});
}

double inner(const MarketModel& m, std::size_t atom, const RandomVariable& a,
             const RandomVariable& b) {
  const auto& blk = m.atom_block(atom);
  double acc = 0.0;
  for (std::size_t r = 0; r < blk.outcomes.size(); ++r) {
    const std::size_t i = blk.outcomes[r];
    acc += blk.weights(r) * a[i] * b[i];
  }
  return acc;
}

}  // namespace

// ---- construction and block data ---------------------------------------------------

TEST(MarketModel, RejectsMalformedInputs) {
  const FiniteSpace sp({0.5, 0.5});
  const Partition F(std::vector<std::size_t>{0, 0}, 1);
  EXPECT_THROW(MarketModel(sp, F, {}, RandomVariable{1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(MarketModel(sp, F, {RandomVariable{1.0, 1.0, 1.0}}, RandomVariable{1.0, 1.0}),
               std::invalid_argument);
  EXPECT_THROW(MarketModel(sp, F, {RandomVariable{1.0, 1.0}}, RandomVariable{1.0, 1.0, 1.0}),
               std::invalid_argument);
}

TEST(MarketModel, AtomBlocksCarryNormalizedWeightsAndPricingCoefficients) {
  const MarketModel m = demo_market();
  ASSERT_EQ(m.asset_count(), 2u);

  const auto& b0 = m.atom_block(0);
  ASSERT_EQ(b0.outcomes.size(), 2u);
  EXPECT_NEAR(b0.weights(0), 0.4, 1e-15);
  EXPECT_NEAR(b0.weights(1), 0.6, 1e-15);
  EXPECT_NEAR(b0.weights.sum(), 1.0, 1e-15);
  EXPECT_NEAR(b0.price_coeff(0), 0.98, 1e-15);   // pi(1) on atom 0
  EXPECT_NEAR(b0.price_coeff(1), 1.03, 1e-15);   // pi(y2) on atom 0
  EXPECT_NEAR(b0.expect_coeff(0), 1.0, 1e-15);
  EXPECT_NEAR(b0.expect_coeff(1), 1.1, 1e-15);

  const auto& b1 = m.atom_block(1);
  EXPECT_NEAR(b1.weights(0), 0.6, 1e-15);
  EXPECT_NEAR(b1.price_coeff(0), 1.04, 1e-15);
  EXPECT_NEAR(b1.price_coeff(1), 1.568, 1e-15);
  EXPECT_NEAR(b1.expect_coeff(1), 1.36, 1e-15);
}

// ---- synthesis and pricing -----------------------------------------------------------

TEST(Portfolio, SynthesizeAppliesAtomwiseCoefficients) {
  const MarketModel m = demo_market();
  PortfolioCoefficients coeff;
  coeff.alpha = {ConditionalValue{1.0, 2.0}, ConditionalValue{3.0, -1.0}};
  const RandomVariable out = synthesize(m, coeff);
  EXPECT_NEAR(out[0], 1.0 + 3.0 * 0.5, 1e-15);
  EXPECT_NEAR(out[1], 1.0 + 3.0 * 1.5, 1e-15);
  EXPECT_NEAR(out[2], 2.0 - 2.0, 1e-15);
  EXPECT_NEAR(out[3], 2.0 - 0.4, 1e-15);

  PortfolioCoefficients bad;
  bad.alpha = {ConditionalValue{1.0, 1.0}};
  EXPECT_THROW(synthesize(m, bad), std::invalid_argument);
}

TEST(Pricing, MatchesHandComputedValuesAndIsLinear) {
  const MarketModel m = demo_market();
  const ConditionalValue p2 = price(m, m.payoffs()[1]);
  EXPECT_NEAR(p2[0], 1.03, 1e-15);
  EXPECT_NEAR(p2[1], 1.568, 1e-15);

  std::mt19937_64 gen(60);
  const RandomVariable x = oracles::random_rv(gen, 4), z = oracles::random_rv(gen, 4);
  const ConditionalValue lhs = price(m, 2.0 * x + z);
  const ConditionalValue px = price(m, x), pz = price(m, z);
  for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(lhs[a], 2.0 * px[a] + pz[a], 1e-12);
}

// ---- attainability --------------------------------------------------------------------

TEST(Attainability, CompleteAtomsReachEverything) {
  const MarketModel m = demo_market();
  std::mt19937_64 gen(61);
  for (int t = 0; t < 10; ++t) {
    const std::vector<bool> in = membership_in_M(m, oracles::random_rv(gen, 4, 3.0));
    EXPECT_TRUE(in[0]);
    EXPECT_TRUE(in[1]);
  }
}

TEST(Attainability, DetectsVectorsOutsideThePayoffSpan) {
  const MarketModel m = tall_market();
  // 1*unit + 1*y2 is attainable by construction.
  EXPECT_TRUE(membership_in_M(m, RandomVariable{1.0, 2.0, 3.0, 2.0, 4.0, 6.0})[0]);
  // (0,0,1) on atom 0 needs a third direction.
  const std::vector<bool> in = membership_in_M(m, RandomVariable{0.0, 0.0, 1.0, 2.0, 4.0, 6.0});
  EXPECT_FALSE(in[0]);
  EXPECT_TRUE(in[1]);  // (2,4,6) = 1*unit + (1,3,5)
}

TEST(Attainability, SynthesizedPortfoliosAreAlwaysMembers) {
  std::mt19937_64 gen(62);
  for (int t = 0; t < 20; ++t) {
    const MarketModel m = oracles::random_market(gen, 6 + rng::index(gen, 5), 2, 2);
    PortfolioCoefficients coeff;
    for (std::size_t j = 0; j < 2; ++j)
      coeff.alpha.push_back(ConditionalValue{rng::normal(gen), rng::normal(gen)});
    const std::vector<bool> in = membership_in_M(m, synthesize(m, coeff));
    for (bool b : in) EXPECT_TRUE(b);
  }
}

// ---- risk-free structure ----------------------------------------------------------------

TEST(RiskFree, ReturnIsReciprocalUnitPrice) {
  const MarketModel m = demo_market();
  const RiskFreeCheck chk = validate_risk_free(m);
  EXPECT_TRUE(chk.ok());
  const ConditionalValue rf = risk_free_return(m);
  EXPECT_NEAR(rf[0], 1.0 / 0.98, 1e-14);
  EXPECT_NEAR(rf[1], 1.0 / 1.04, 1e-14);
}

TEST(RiskFree, ThrowsWhenUnitPayoffNotAttainable) {
  const FiniteSpace sp({0.2, 0.3, 0.3, 0.2});
  const Partition F(std::vector<std::size_t>{0, 0, 1, 1}, 2);
  // Single non-constant asset: the unit payoff is outside its span.
  const MarketModel m(sp, F, {RandomVariable{0.5, 1.5, 2.0, 0.4}},
                      RandomVariable{1.1, 0.9, 1.2, 0.8});
  const RiskFreeCheck chk = validate_risk_free(m);
  EXPECT_FALSE(chk.unit_attainable[0]);
  try {
    risk_free_return(m);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("atom 0"), std::string::npos);
  }
}

TEST(RiskFree, ThrowsWhenUnitPriceIsNotPositive) {
  const FiniteSpace sp({0.25, 0.25, 0.25, 0.25});
  const Partition F(std::vector<std::size_t>{0, 0, 1, 1}, 2);
  std::vector<RandomVariable> payoffs;
  payoffs.emplace_back(4, 1.0);
  payoffs.push_back(RandomVariable{0.5, 1.5, 2.0, 0.4});
  // E[psi | atom 0] = 0.5*1 - 0.5*1 = 0, exactly representable.
  const MarketModel m(sp, F, payoffs, RandomVariable{1.0, -1.0, 1.2, 0.8});
  const RiskFreeCheck chk = validate_risk_free(m);
  EXPECT_TRUE(chk.unit_attainable[0]);
  EXPECT_FALSE(chk.unit_price_positive[0]);
  EXPECT_TRUE(chk.unit_price_positive[1]);
  try {
    risk_free_return(m);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("nonpositive price on atom 0"), std::string::npos);
  }
}

// ---- independence of pricing and expectation -----------------------------------------------

TEST(Independence, HoldsOnDemoMarketWithUsableWitness) {
  const MarketModel m = demo_market();
  const IndependenceCheck chk = validate_pricing_independence(m);
  EXPECT_TRUE(chk.ok());
  ASSERT_TRUE(chk.zero_price_unit_mean.has_value());

  const RandomVariable& z = *chk.zero_price_unit_mean;
  const ConditionalValue pz = price(m, z);
  const ConditionalValue ez = cond_expect(m.space(), m.partition(), z);
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_NEAR(pz[a], 0.0, 1e-12);
    EXPECT_NEAR(ez[a], 1.0, 1e-12);
  }
  const std::vector<bool> in = membership_in_M(m, z);
  for (bool b : in) EXPECT_TRUE(b);
}

TEST(Independence, FailsWhenStatePriceIsConstantOne) {
  // With psi = 1 pricing equals conditional expectation: rank 1 on every atom.
  const FiniteSpace sp({0.2, 0.3, 0.3, 0.2});
  const Partition F(std::vector<std::size_t>{0, 0, 1, 1}, 2);
  std::vector<RandomVariable> payoffs;
  payoffs.emplace_back(4, 1.0);
  payoffs.push_back(RandomVariable{0.5, 1.5, 2.0, 0.4});
  const MarketModel m(sp, F, payoffs, RandomVariable(4, 1.0));
  const IndependenceCheck chk = validate_pricing_independence(m);
  EXPECT_FALSE(chk.independent[0]);
  EXPECT_FALSE(chk.independent[1]);
  EXPECT_FALSE(chk.zero_price_unit_mean.has_value());
}

TEST(Independence, RequiresAtLeastTwoAssets) {
  const FiniteSpace sp({0.5, 0.5});
  const Partition F(std::vector<std::size_t>{0, 0}, 1);
  const MarketModel m(sp, F, {RandomVariable{1.0, 1.0}}, RandomVariable{1.1, 0.9});
  const IndependenceCheck chk = validate_pricing_independence(m);
  EXPECT_FALSE(chk.independent[0]);
  EXPECT_FALSE(chk.zero_price_unit_mean.has_value());
}

TEST(Independence, HoldsOnRandomMarketsWithGenericStatePrices) {
  std::mt19937_64 gen(63);
  for (int t = 0; t < 20; ++t) {
    const MarketModel m = oracles::random_market(gen, 6 + rng::index(gen, 5), 2, 3);
    const IndependenceCheck chk = validate_pricing_independence(m);
    EXPECT_TRUE(chk.ok());
  }
}

// ---- projection ------------------------------------------------------------------------------

TEST(Projection, FixesMembersAndIsIdempotent) {
  const MarketModel m = tall_market();
  PortfolioCoefficients coeff;
  coeff.alpha = {ConditionalValue{0.7, -1.2}, ConditionalValue{2.0, 0.3}};
  const RandomVariable member = synthesize(m, coeff);
  const RandomVariable pm = project_onto_M(m, member);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(pm[i], member[i], 1e-12);

  std::mt19937_64 gen(64);
  const RandomVariable z = oracles::random_rv(gen, 6, 2.0);
  const RandomVariable pz = project_onto_M(m, z);
  const RandomVariable ppz = project_onto_M(m, pz);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(ppz[i], pz[i], 1e-12);
}

TEST(Projection, ResidualIsOrthogonalToEveryPayoff) {
  const MarketModel m = tall_market();
  std::mt19937_64 gen(65);
  for (int t = 0; t < 10; ++t) {
    const RandomVariable z = oracles::random_rv(gen, 6, 2.0);
    const RandomVariable pz = project_onto_M(m, z);
    const RandomVariable resid = z - pz;
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t j = 0; j < m.asset_count(); ++j)
        EXPECT_NEAR(inner(m, a, resid, m.payoffs()[j]), 0.0, 1e-12);
      // Pythagoras in the conditional L2 geometry.
      EXPECT_NEAR(inner(m, a, z, z), inner(m, a, pz, pz) + inner(m, a, resid, resid), 1e-11);
    }
  }
}

TEST(Projection, ProjectionIsMemberAndNeverIncreasesNorm) {
  const MarketModel m = tall_market();
  std::mt19937_64 gen(66);
  for (int t = 0; t < 10; ++t) {
    const RandomVariable z = oracles::random_rv(gen, 6, 2.0);
    const RandomVariable pz = project_onto_M(m, z);
    const std::vector<bool> in = membership_in_M(m, pz);
    for (bool b : in) EXPECT_TRUE(b);
    for (std::size_t a = 0; a < 2; ++a) EXPECT_LE(inner(m, a, pz, pz), inner(m, a, z, z) + 1e-12);
  }
}

TEST(Projection, ExactlyDuplicatedAssetIsFilteredNotFatal) {
  const FiniteSpace sp(std::vector<double>(6, 1.0 / 6.0));
  const Partition F(std::vector<std::size_t>{0, 0, 0, 1, 1, 1}, 2);
  const RandomVariable y2{0.0, 1.0, 2.0, 1.0, 3.0, 5.0};
  std::vector<RandomVariable> payoffs{RandomVariable(6, 1.0), y2, y2};
  const MarketModel dup(sp, F, payoffs, RandomVariable(6, 1.0));
  const MarketModel base = tall_market();

  std::mt19937_64 gen(67);
  const RandomVariable z = oracles::random_rv(gen, 6, 2.0);
  RandomVariable expected(6, 0.0);
  {
    // Same span as the two-asset market, so the projection must agree.
    const FiniteSpace sp2(std::vector<double>(6, 1.0 / 6.0));
    std::vector<RandomVariable> two{RandomVariable(6, 1.0), y2};
    const MarketModel plain(sp2, F, two, RandomVariable(6, 1.0));
    expected = project_onto_M(plain, z);
  }
  const RandomVariable got = project_onto_M(dup, z);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
}

TEST(Projection, NearlyDependentAssetsAreRejected) {
  const FiniteSpace sp(std::vector<double>(6, 1.0 / 6.0));
  const Partition F(std::vector<std::size_t>{0, 0, 0, 1, 1, 1}, 2);
  const RandomVariable y2{0.0, 1.0, 2.0, 1.0, 3.0, 5.0};
  RandomVariable y3 = y2;
  y3[0] += 1e-8;
  y3[4] -= 1e-8;
  std::vector<RandomVariable> payoffs{RandomVariable(6, 1.0), y2, y3};
  const MarketModel m(sp, F, payoffs, RandomVariable(6, 1.0));
  EXPECT_THROW(project_onto_M(m, RandomVariable{1.0, 2.0, 0.0, -1.0, 3.0, 0.5}),
               std::runtime_error);
}
