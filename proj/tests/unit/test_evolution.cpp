#include <cmath>

#include <gtest/gtest.h>

#include "pineapple/evolution.hpp"

using namespace pineapple;

namespace {

double sphere(const Eigen::VectorXd& x) { return x.squaredNorm(); }

double rosenbrock(const Eigen::VectorXd& x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
        s += 100.0 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1.0 - x[i], 2);
    return s;
}

}  // namespace

TEST(Seeds, DeriveIsDeterministicAndDistinct) {
    EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
    EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
    EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
    EXPECT_NE(mix_seed(0), 0u);
}

TEST(Argsort, StableWithNanLast) {
    const auto idx = argsort({3.0, 1.0, std::nan(""), 1.0, -2.0});
    EXPECT_EQ(idx, (std::vector<int>{4, 1, 3, 0, 2}));
}

TEST(Cmaes, DefaultPopulation) {
    Cmaes es(Eigen::VectorXd::Zero(4), 1.0);
    EXPECT_EQ(es.population(), 4 + static_cast<int>(std::floor(3 * std::log(4.0))));
}

TEST(Cmaes, SphereFourD) {
    Cmaes es(Eigen::VectorXd::Constant(4, 1.0), 0.5, {20, 3});
    const auto res = minimize(es, sphere, 200, 1e-10);
    EXPECT_LE(res.best_fitness, 1e-10);
    EXPECT_LE(res.generations, 200);
}

TEST(Cmaes, RosenbrockFourD) {
    Cmaes es(Eigen::VectorXd::Zero(4), 0.5, {20, 3});
    const auto res = minimize(es, rosenbrock, 2000, 1e-6);
    EXPECT_LE(res.best_fitness, 1e-6);
}

TEST(Cmaes, TraceNonIncreasingAndReproducible) {
    Cmaes a(Eigen::VectorXd::Constant(3, 2.0), 0.3, {10, 42});
    Cmaes b(Eigen::VectorXd::Constant(3, 2.0), 0.3, {10, 42});
    const auto ra = minimize(a, rosenbrock, 60);
    const auto rb = minimize(b, rosenbrock, 60);
    EXPECT_EQ(ra.trace, rb.trace);
    EXPECT_EQ(ra.best, rb.best);
    for (std::size_t i = 1; i < ra.trace.size(); ++i) EXPECT_LE(ra.trace[i], ra.trace[i - 1]);
}

TEST(Cmaes, CovarianceStaysSymmetricPositive) {
    Cmaes es(Eigen::VectorXd::Zero(4), Eigen::Vector4d(0.1, 1.0, 0.5, 2.0), {12, 9});
    minimize(es, rosenbrock, 50);
    const auto& c = es.covariance();
    EXPECT_LE((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-12 * c.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(Snes, SphereConverges) {
    SeparableNes es(Eigen::VectorXd::Constant(6, 1.5), Eigen::VectorXd::Constant(6, 1.0), {16, 5});
    const auto res = minimize(es, sphere, 400, 1e-10);
    EXPECT_LE(res.best_fitness, 1e-10);
    EXPECT_EQ(es.name(), "diag-nes");
}

TEST(Snes, Reproducible) {
    SeparableNes a(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3), {8, 1});
    SeparableNes b(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3), {8, 1});
    EXPECT_EQ(minimize(a, rosenbrock, 30).trace, minimize(b, rosenbrock, 30).trace);
}
