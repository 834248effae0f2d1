#include <cmath>

#include <gtest/gtest.h>

#include "pineapple/core_model.hpp"
#include "pineapple/errors.hpp"

using namespace pineapple;

TEST(ScalingFactors, DeclaredBoundsEnforced) {
    EXPECT_NO_THROW(ScalingFactors(0.1, 0.01, 1.0, 0.8));
    EXPECT_NO_THROW(ScalingFactors(10.0, 10.0, 4.0, 1.2));
    EXPECT_THROW(ScalingFactors(0.09, 1.0, 1.0, 1.0), RangeError);
    EXPECT_THROW(ScalingFactors(1.0, 11.0, 1.0, 1.0), RangeError);
    EXPECT_THROW(ScalingFactors(1.0, 1.0, 0.9, 1.0), RangeError);
    EXPECT_THROW(ScalingFactors(1.0, 1.0, 1.0, 1.3), RangeError);
}

TEST(ScalingFactors, UnboundedEscapeHatch) {
    const auto f = ScalingFactors::unbounded(20.0, 1.0, 1.0, 1.0);
    EXPECT_FALSE(f.bounded());
    EXPECT_EQ(f.eta_dp(), 20.0);
    EXPECT_THROW(ScalingFactors::unbounded(-1.0, 1.0, 1.0, 1.0), RangeError);
    const ScalingFactors base(1.0, 1.0, 1.0, 1.0);
    EXPECT_THROW(base.with(Factor::Gp, 4.4), RangeError);
    EXPECT_FALSE(base.with(Factor::Gp, 4.4, true).bounded());
}

TEST(ApplyScaling, IdentityFactorsReturnBaseline) {
    const auto cfg = ModelConfig::defaults();
    const auto base = cfg.baseline();
    const auto eff = apply_scaling(base, ScalingFactors());
    EXPECT_EQ(eff.positive.diffusion, base.positive.diffusion);
    EXPECT_EQ(eff.positive.geometric, base.positive.geometric);
    EXPECT_EQ(eff.positive.max_concentration, base.positive.max_concentration);
    EXPECT_EQ(eff.negative.diffusion, base.negative.diffusion);
    EXPECT_EQ(eff.negative.geometric, base.negative.geometric);
    EXPECT_EQ(eff.constants.film_resistance, base.constants.film_resistance);
}

TEST(ApplyScaling, ReferenceDiffusionPassesThrough) {
    const auto eff = apply_scaling(ModelConfig::defaults(), ScalingFactors());
    EXPECT_DOUBLE_EQ(eff.positive.diffusion, 3.9e-14);
}

TEST(ApplyScaling, GeometricCoefficientFromComponents) {
    // R_p = 5 * 3.0e-6, eps = 0.689, A = 0.1, L = 7.2e-5
    const double r = 5.0 * 3.0e-6;
    const double g_ref = r / (3.0 * 0.689 * 0.1 * 7.2e-5);
    const auto cfg = ModelConfig::defaults();
    const auto base = cfg.baseline();
    EXPECT_NEAR(base.positive.geometric, g_ref, 1e-12 * g_ref);
    EXPECT_NEAR(g_ref, 1.0079019512981778, 1e-12);
    const auto eff = apply_scaling(cfg, ScalingFactors(1.0, 1.0, 2.0, 1.0));
    EXPECT_NEAR(eff.positive.geometric, 2.0 * g_ref, 1e-12 * g_ref);
}

TEST(ApplyScaling, FixedFactorsApplied) {
    const auto base = ModelConfig::defaults().baseline();
    EXPECT_DOUBLE_EQ(base.positive.initial_concentration, 0.82 * 30730.0);
    EXPECT_DOUBLE_EQ(base.positive.radius, 5.0 * 3.0e-6);
    EXPECT_DOUBLE_EQ(base.positive.exchange_current, 2.5 * 0.1);
    EXPECT_DOUBLE_EQ(base.negative.radius, 2.0 * 5.86e-6);
    EXPECT_DOUBLE_EQ(base.negative.exchange_current, 3.2 * 0.077);
    EXPECT_DOUBLE_EQ(base.constants.film_resistance, 0.5 * 0.02);
}

TEST(ApplyScaling, CmaxFactorLeavesInitialConcentration) {
    const auto cfg = ModelConfig::defaults();
    const auto a = apply_scaling(cfg, ScalingFactors(1.0, 1.0, 1.0, 1.0));
    const auto b = apply_scaling(cfg, ScalingFactors(1.0, 1.0, 1.0, 1.2));
    EXPECT_EQ(a.positive.initial_concentration, b.positive.initial_concentration);
    EXPECT_DOUBLE_EQ(b.positive.max_concentration, 1.2 * a.positive.max_concentration);
}

TEST(ElectrodeParams, GeometryConsistencyChecked) {
    auto p = ModelConfig::defaults().baseline().positive;
    ASSERT_TRUE(p.geometry.has_value());
    p.geometric *= 1.0 + 1e-9;
    EXPECT_THROW(p.validate(), RangeError);
    auto q = ModelConfig::defaults().baseline().positive;
    q.initial_concentration = q.max_concentration * 1.01;
    EXPECT_THROW(q.validate(), RangeError);
}

TEST(Nondimensionalize, HandArithmetic) {
    const auto nd = nondimensionalize(3.9e-14, 1.5e-5, 25198.6, 1e-5, 3600.0);
    EXPECT_NEAR(nd.alpha, 3.9e-14 * 3600.0 / (1.5e-5 * 1.5e-5), 1e-15);
    EXPECT_NEAR(nd.alpha, 0.624, 1e-12);
    EXPECT_NEAR(nd.beta, 1e-5 * 1.5e-5 / (3.9e-14 * 25198.6), 1e-12);
}

TEST(Nondimensionalize, ZeroFluxGivesZeroBeta) {
    EXPECT_EQ(nondimensionalize(1e-14, 2e-5, 3e4, 0.0, 3600.0).beta, 0.0);
    EXPECT_EQ(nondimensionalize(7e-13, 1e-6, 1e3, 0.0, 10.0).beta, 0.0);
}

TEST(Nondimensionalize, DoublingDiffusion) {
    const auto a = nondimensionalize(2e-14, 1e-5, 2e4, 3e-6, 3600.0);
    const auto b = nondimensionalize(4e-14, 1e-5, 2e4, 3e-6, 3600.0);
    EXPECT_DOUBLE_EQ(b.alpha, 2.0 * a.alpha);
    EXPECT_DOUBLE_EQ(b.beta, 0.5 * a.beta);
}

TEST(Nondimensionalize, Errors) {
    EXPECT_THROW(nondimensionalize(0.0, 1e-5, 2e4, 1e-6, 3600.0), SingularParameterError);
    EXPECT_THROW(nondimensionalize(1e-14, -1e-5, 2e4, 1e-6, 3600.0), RangeError);
    EXPECT_THROW(nondimensionalize(1e-14, 1e-5, 2e4, 1e-6, 0.0), RangeError);
}

TEST(TaskPair, DischargeSignConvention) {
    const auto cfg = ModelConfig::defaults();
    const auto params = apply_scaling(cfg, ScalingFactors(2.5, 0.25, 2.5, 1.0));
    const auto pair = make_task_pair(params);
    EXPECT_GT(pair.positive.beta, 0.0);
    EXPECT_LT(pair.negative.beta, 0.0);
    const auto& c = params.constants;
    EXPECT_DOUBLE_EQ(pair.positive.surface_flux, c.current / c.faraday * params.positive.geometric);
    EXPECT_DOUBLE_EQ(pair.negative.surface_flux, -c.current / c.faraday * params.negative.geometric);
    EXPECT_GT(pair.positive.alpha, 0.0);
}

TEST(TaskPair, Deterministic) {
    const auto cfg = ModelConfig::defaults();
    const ScalingFactors f(1.7, 0.3, 2.2, 0.9);
    const auto a = make_task_pair(apply_scaling(cfg, f));
    const auto b = make_task_pair(apply_scaling(cfg, f));
    EXPECT_EQ(a.positive.alpha, b.positive.alpha);
    EXPECT_EQ(a.positive.beta, b.positive.beta);
    EXPECT_EQ(a.negative.alpha, b.negative.alpha);
    EXPECT_EQ(a.negative.beta, b.negative.beta);
}

TEST(ModelConfig, JsonRoundTrip) {
    const auto cfg = ModelConfig::defaults();
    const auto again = ModelConfig::from_json(cfg.to_json());
    EXPECT_EQ(again.to_json(), cfg.to_json());
    EXPECT_THROW(ModelConfig::from_json({{"bogus", 1}}), ConfigError);
}

TEST(ScalingFactors, JsonRoundTrip) {
    const ScalingFactors f(1.5, 0.1, 3.5, 1.0);
    EXPECT_EQ(scaling_factors_from_json(to_json(f)), f);
    EXPECT_THROW(scaling_factors_from_json({{"eta_Dp", 1.0}}), ConfigError);
}
