#include <cmath>

#include <gtest/gtest.h>

#include "pineapple/errors.hpp"
#include "pineapple/voltage_model.hpp"

using namespace pineapple;

namespace {

const OcpPair& ocp() {
    static const OcpPair pair = OcpPair::defaults();
    return pair;
}

const ReferenceSurface& coarse_reference() {
    static const ReferenceSurface ref(128, 361);
    return ref;
}

double arcsinh(double x) { return std::log(x + std::sqrt(x * x + 1.0)); }

}  // namespace

TEST(Ocp, DefaultCurvesDecreasing) {
    EXPECT_TRUE(ocp().positive.decreasing_on(0.4, 0.99));
    EXPECT_TRUE(ocp().negative.decreasing_on(0.01, 0.9));
    EXPECT_THROW(ocp().positive(1.5), CurveDomainError);
    EXPECT_THROW(ocp().negative(-0.1), CurveDomainError);
}

TEST(Ocp, TableMatchesTerms) {
    for (const auto* curve : {&ocp().positive, &ocp().negative}) {
        const auto table = curve->tabulated(2001, 0.01, 0.99);
        EXPECT_EQ(table.kind(), EquilibriumPotentialCurve::Kind::Table);
        for (int i = 0; i <= 1000; ++i) {
            const double x = 0.01 + 0.98 * (i + 0.37) / 1001.0;
            EXPECT_NEAR(table(x), (*curve)(x), 1e-3) << curve->id() << " at " << x;
        }
    }
}

TEST(Ocp, JsonRoundTrip) {
    const auto back = EquilibriumPotentialCurve::from_json(ocp().positive.to_json());
    for (double x : {0.45, 0.6, 0.95}) EXPECT_EQ(back(x), ocp().positive(x));
    const auto table = ocp().negative.tabulated(50, 0.001, 0.999);
    const auto tb = EquilibriumPotentialCurve::from_json(table.to_json());
    for (double x : {0.013, 0.5, 0.77}) EXPECT_EQ(tb(x), table(x));
}

TEST(Ocp, TableRejectsUnsortedInput) {
    EXPECT_THROW(EquilibriumPotentialCurve::from_table("bad", {0.0, 0.5, 0.4}, {1.0, 0.9, 0.8}), FormatError);
}

TEST(Voltage, ZeroCurrentIsOpenCircuit) {
    auto params = ModelConfig::defaults().baseline();
    params.constants.current = 0.0;
    const auto p = terminal_voltage(0.6, 0.4, params, ocp());
    EXPECT_EQ(p.overvoltage, 0.0);
    EXPECT_EQ(p.v, ocp().positive(0.6) - ocp().negative(0.4));
}

TEST(Voltage, OvervoltageHandArithmetic) {
    const auto params = ModelConfig::defaults().baseline();
    const double thermal = 2.0 * 8.3145 * 298.15 / 96485.0;
    const double gp = 1.0079019512981778, jp = 0.25;
    const double gn = params.negative.geometric, jn = 3.2 * 0.077;
    const double expected = thermal * arcsinh(1.35 * gp / (2.0 * jp)) + thermal * arcsinh(1.35 * gn / (2.0 * jn)) +
                            0.01 * 1.35;
    EXPECT_NEAR(overvoltage(params), expected, 1e-12);
}

TEST(Voltage, BelowOpenCircuitDuringDischarge) {
    const auto params = ModelConfig::defaults().baseline();
    for (double y : {0.45, 0.6, 0.8, 0.95})
        for (double x : {0.1, 0.3, 0.6}) {
            const auto p = terminal_voltage(y, x, params, ocp());
            EXPECT_LT(p.v, p.ocv);
            EXPECT_FALSE(p.clamped);
        }
}

TEST(Voltage, ClampsStoichiometry) {
    const auto params = ModelConfig::defaults().baseline();
    const auto p = terminal_voltage(1.2, -0.1, params, ocp());
    EXPECT_TRUE(p.clamped);
    EXPECT_EQ(p.y_p, 1.0 - kStoichiometryClamp);
    EXPECT_EQ(p.x_n, kStoichiometryClamp);
}

TEST(Voltage, NonPositiveExchangeCurrentRejected) {
    auto params = ModelConfig::defaults().baseline();
    params.negative.exchange_current = 0.0;
    EXPECT_THROW(terminal_voltage(0.6, 0.4, params, ocp()), RangeError);
}

TEST(Synthesis, CmaxDoesNotEnterSurfaceTasks) {
    const auto cfg = ModelConfig::defaults();
    const auto a = make_task_pair(apply_scaling(cfg, ScalingFactors(1.0, 1.0, 1.0, 0.8)));
    const auto b = make_task_pair(apply_scaling(cfg, ScalingFactors(1.0, 1.0, 1.0, 1.2)));
    EXPECT_EQ(a.positive.alpha, b.positive.alpha);
    EXPECT_EQ(a.positive.beta, b.positive.beta);
    EXPECT_EQ(a.negative.beta, b.negative.beta);
}

TEST(Synthesis, DegradationShortensDischarge) {
    const auto times = uniform_times(121);
    const auto cfg = ModelConfig::defaults();
    const auto early = synthesize_vt(ScalingFactors(2.5, 0.25, 2.5, 1.0), cfg, ocp(), coarse_reference(), times);
    const auto middle = synthesize_vt(ScalingFactors(1.5, 0.1, 3.5, 1.0), cfg, ocp(), coarse_reference(), times);
    const auto late = synthesize_vt(ScalingFactors(0.3, 0.03, 3.5, 1.0), cfg, ocp(), coarse_reference(), times);
    EXPECT_GT(early.curve.duration(), middle.curve.duration());
    EXPECT_GT(middle.curve.duration(), late.curve.duration());
    for (const auto* r : {&early, &middle, &late}) {
        EXPECT_NO_THROW(r->curve.validate());
        EXPECT_EQ(r->status(), "ok");
        EXPECT_GE(r->curve.v.back(), kCutoffVoltage);
        EXPECT_EQ(r->points.size(), times.size());
    }
}

TEST(Synthesis, TruncationKeepsPrefix) {
    const auto times = uniform_times(121);
    const ScalingFactors f(0.3, 0.03, 3.5, 1.0);
    const auto cut = synthesize_vt(f, ModelConfig::defaults(), ocp(), coarse_reference(), times, true);
    const auto full = synthesize_vt(f, ModelConfig::defaults(), ocp(), coarse_reference(), times, false);
    ASSERT_LT(cut.curve.size(), full.curve.size());
    for (std::size_t i = 0; i < cut.curve.size(); ++i) EXPECT_EQ(cut.curve.v[i], full.curve.v[i]);
    EXPECT_LT(full.curve.v[cut.curve.size()], kCutoffVoltage);
}

TEST(Synthesis, ImplausibleWhenMostlyClamped) {
    const auto times = uniform_times(121);
    const auto r = synthesize_vt(ScalingFactors(0.1, 0.01, 4.0, 1.2), ModelConfig::defaults(), ocp(),
                                 coarse_reference(), times, false);
    EXPECT_GT(r.clamped_fraction(), kImplausibleClampFraction);
    EXPECT_TRUE(r.implausible);
    EXPECT_EQ(r.status(), "implausible-parameters");
}

TEST(Synthesis, TimesOutsideHorizonRejected) {
    EXPECT_THROW(synthesize_vt(ScalingFactors(), ModelConfig::defaults(), ocp(), coarse_reference(), {0.0, 3601.0}),
                 DomainError);
}

TEST(Synthesis, SynthesizerIsReusable) {
    const VoltageSynthesizer synth(ModelConfig::defaults(), ocp(), coarse_reference(), uniform_times(61));
    const auto a = synth(ScalingFactors(1.5, 0.1, 3.5, 1.0));
    synth(ScalingFactors(0.5, 0.5, 2.0, 0.9));
    const auto b = synth(ScalingFactors(1.5, 0.1, 3.5, 1.0));
    EXPECT_EQ(a.curve.v, b.curve.v);
}

TEST(DischargeCurve, Validation) {
    DischargeCurve c;
    EXPECT_THROW(c.validate(), EmptyCurveError);
    c.t = {0.0, 1.0, 1.0};
    c.v = {4.0, 3.9, 3.8};
    EXPECT_THROW(c.validate(), FormatError);
    c.t = {0.0, 1.0, 2.0};
    c.v = {4.0, 3.9, 2.5};
    EXPECT_THROW(c.validate(), FormatError);
    c.v = {4.0, 3.9, 3.8};
    EXPECT_NO_THROW(c.validate());
}

TEST(Synthesis, TrainedBasisMatchesReference) {
    const auto basis = std::make_shared<const FeatureBasis>(
        FeatureBasis::load(std::string(PINEAPPLE_SOURCE_DIR) + "/data/basis/basis.json"));
    const SurrogateSurface surrogate(basis);
    const ReferenceSurface reference;
    const auto times = uniform_times(601);
    for (const ScalingFactors& f : {ScalingFactors(2.5, 0.25, 2.5, 1.0), ScalingFactors(1.5, 0.1, 3.5, 1.0),
                                    ScalingFactors(0.3, 0.03, 3.5, 1.0)}) {
        const auto a = synthesize_vt(f, ModelConfig::defaults(), ocp(), reference, times);
        const auto b = synthesize_vt(f, ModelConfig::defaults(), ocp(), surrogate, times);
        const std::size_t n = std::min(a.curve.size(), b.curve.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(a.curve.v[i] - b.curve.v[i]));
        EXPECT_LE(worst, 5e-3) << "eta_Dn " << f.eta_dn();
    }
}
