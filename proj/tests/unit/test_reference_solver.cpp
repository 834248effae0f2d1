#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "pineapple/errors.hpp"
#include "pineapple/reference_solver.hpp"

using namespace pineapple;

namespace {

SolverGrid grid(int n_r, int substeps = 1) {
    SolverGrid g;
    g.n_r = n_r;
    g.substeps = substeps;
    return g;
}

// Independent root finder for tan(x) = x: bisection on x cos x - sin x.
double tan_root(int n) {
    const double pi = std::numbers::pi;
    double lo = n * pi + 1e-9, hi = (n + 0.5) * pi - 1e-12;
    auto g = [](double x) { return x * std::cos(x) - std::sin(x); };
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        if ((g(lo) < 0) == (g(mid) < 0)) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST(TanRoots, MatchIndependentBisection) {
    const auto roots = tan_equals_identity_roots(50);
    ASSERT_EQ(roots.size(), 50u);
    EXPECT_NEAR(roots[0], 4.493409457909064, 1e-12);
    for (int n = 0; n < 50; ++n) EXPECT_NEAR(roots[n], tan_root(n + 1), 1e-10);
}

TEST(AnalyticSeries, ZeroFluxIsOne) {
    for (double r : {0.0, 0.3, 1.0})
        for (double t : {0.0, 0.5, 1.0}) EXPECT_EQ(analytic_constant_flux(2.0, 0.0, r, t), 1.0);
}

TEST(AnalyticSeries, QuasiSteadyProfileDifference) {
    // transients are gone once alpha t >> 1/l_1^2
    const double beta = 0.37;
    const double d = analytic_constant_flux(1.0, beta, 1.0, 5.0) - analytic_constant_flux(1.0, beta, 0.0, 5.0);
    EXPECT_NEAR(d, beta / 2.0, 1e-12);
}

TEST(AnalyticSeries, MassBalance) {
    const ConstantFluxSeries s(2000);
    const double alpha = 0.8, beta = -0.4, t = 0.3;
    const int n = 4000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = (i + 0.5) / n;
        mean += 3.0 * r * r * s(alpha, beta, r, t) / n;
    }
    EXPECT_NEAR(mean, 1.0 + 3.0 * alpha * beta * t, 1e-6);
}

TEST(AnalyticSeries, DomainErrors) {
    EXPECT_THROW(analytic_constant_flux(1.0, 1.0, 1.5, 0.5), DomainError);
    EXPECT_THROW(analytic_constant_flux(1.0, 1.0, 0.5, -0.1), DomainError);
    EXPECT_THROW(ConstantFluxSeries(10), ConfigError);
}

TEST(ReferenceSolver, ZeroFluxExactlyOne) {
    for (double alpha : {0.01, 1.0, 50.0}) {
        const auto f = solve_reference({alpha, 0.0});
        EXPECT_EQ((f.values.array() - 1.0).abs().maxCoeff(), 0.0);
    }
}

TEST(ReferenceSolver, InitialRowIsOne) {
    const auto f = solve_reference({0.7, -0.6});
    EXPECT_EQ(f.n_t(), 61);
    EXPECT_EQ(f.n_r(), 64);
    EXPECT_EQ((f.values.row(0).array() - 1.0).abs().maxCoeff(), 0.0);
}

TEST(ReferenceSolver, MassBalanceEveryStep) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> la(-2.0, 1.5), ub(-1.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        const Nondimensional task{std::pow(10.0, la(rng)), ub(rng)};
        const auto f = solve_reference(task);
        for (Eigen::Index i = 0; i < f.n_t(); ++i)
            EXPECT_NEAR(mean_concentration(f.values.row(i)), 1.0 + 3.0 * task.alpha * task.beta * f.t(i), 1e-8);
    }
}

TEST(ReferenceSolver, ShellVolumesSumToThird) {
    for (int n : {4, 64, 1024}) EXPECT_NEAR(shell_volumes(n).sum(), 1.0 / 3.0, 1e-15);
}

TEST(ReferenceSolver, SurfaceMatchesSeries) {
    const auto f = solve_reference({0.5, -0.3}, grid(1024, 16));
    EXPECT_NEAR(f.values(60, 1023), analytic_constant_flux(0.5, -0.3, 1.0, 1.0), 1e-4);
}

TEST(ReferenceSolver, AgreesWithSeriesAtFineMesh) {
    const ConstantFluxSeries s(4000);
    const auto f = solve_reference({1.0, 1.0}, grid(1024, 64));
    EXPECT_LE(relative_l2(f.values, s.field(1.0, 1.0, f.r, f.t).values), 1e-6);
}

TEST(ReferenceSolver, SecondOrderInSpace) {
    const ConstantFluxSeries s(4000);
    std::vector<double> err;
    for (int n : {64, 128, 256}) {
        const auto f = solve_reference({1.0, 1.0}, grid(n, 64));
        err.push_back(relative_l2(f.values, s.field(1.0, 1.0, f.r, f.t).values));
    }
    for (std::size_t i = 0; i + 1 < err.size(); ++i) {
        const double p = std::log2(err[i] / err[i + 1]);
        EXPECT_GE(p, 1.8);
        EXPECT_LE(p, 2.2);
    }
}

TEST(ReferenceSolver, SurfaceMonotoneInBeta) {
    const auto lo = solve_reference({0.4, -0.5});
    const auto hi = solve_reference({0.4, -0.2});
    EXPECT_TRUE(((hi.surface() - lo.surface()).array() >= 0.0).all());
}

TEST(ReferenceSolver, GridValidation) {
    EXPECT_THROW(solve_reference({1.0, 0.1}, grid(3)), ConfigError);
    EXPECT_THROW(solve_reference({0.0, 0.1}), RangeError);
}

TEST(Benchmark, RefinementReducesError) {
    const auto rows = benchmark_solver({1.0, 1.0}, {32, 128, 1024}, 5);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_GT(rows[0].relative_error, rows[1].relative_error);
    EXPECT_GT(rows[1].relative_error, rows[2].relative_error);
    EXPECT_THROW(benchmark_solver({1.0, 1.0}, {48}, 5), ConfigError);
    EXPECT_THROW(benchmark_solver({1.0, 1.0}, {32}, 2), ConfigError);
}

TEST(Labels, CsvRoundTrip) {
    const auto f = label_field({0.3, -0.2}, 128, 2);
    const std::string path = testing::TempDir() + "/label_roundtrip.csv";
    write_label_csv(path, f);
    const auto g = read_label_csv(path);
    EXPECT_EQ(g.values.rows(), 61);
    EXPECT_EQ(g.values.cols(), 64);
    EXPECT_LE((g.values - f.values).cwiseAbs().maxCoeff(), 1e-15);
}
