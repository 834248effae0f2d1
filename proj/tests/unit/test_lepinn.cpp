#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "pineapple/errors.hpp"
#include "pineapple/lepinn.hpp"
#include "pineapple/meta_train.hpp"
#include "pineapple/reference_solver.hpp"

using namespace pineapple;

namespace {

FeatureBasis random_basis(int per_block, double scale, std::uint64_t seed, LearningHyper hyper = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    const int width = 3 * per_block;
    std::vector<Activation> tags;
    for (Activation a : {Activation::Sin, Activation::Silu, Activation::Tanh})
        for (int k = 0; k < per_block; ++k) tags.push_back(a);
    Eigen::VectorXd wr(width), wt(width), b(width);
    for (int j = 0; j < width; ++j) {
        wr[j] = n(rng);
        wt[j] = n(rng);
        b[j] = n(rng);
    }
    return FeatureBasis(tags, wr, wt, b, hyper);
}

std::shared_ptr<const FeatureBasis> default_basis() {
    static auto b = std::make_shared<const FeatureBasis>(materialize(DistributionGenome::initial(1), 256));
    return b;
}

}  // namespace

TEST(Features, ZeroWeightsGiveActivationOfBias) {
    std::vector<Activation> tags{Activation::Sin, Activation::Silu, Activation::Tanh};
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(3), bias(3);
    bias << 0.3, -0.7, 1.1;
    const FeatureBasis basis(tags, zero, zero, bias, {});
    const auto v = basis.eval(0.42, 0.77);
    EXPECT_DOUBLE_EQ(v.f[0], std::sin(0.3));
    EXPECT_DOUBLE_EQ(v.f[1], -0.7 / (1.0 + std::exp(0.7)));
    EXPECT_DOUBLE_EQ(v.f[2], std::tanh(1.1));
    EXPECT_EQ(v.f_r.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(v.f_rr.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(v.f_t.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Features, SinDerivativeClosedForm) {
    const double a = 0.8, b = -1.3, c = 0.25;
    const FeatureBasis basis({Activation::Sin}, Eigen::VectorXd::Constant(1, a), Eigen::VectorXd::Constant(1, b),
                             Eigen::VectorXd::Constant(1, c), {});
    for (auto [r, t] : {std::pair{0.0, 0.0}, std::pair{0.5, 0.2}, std::pair{1.0, 0.9}}) {
        const double z = a * (2 * r - 1) + b * (2 * t - 1) + c;
        const auto v = basis.eval(r, t);
        EXPECT_NEAR(v.f_r[0], 2 * a * std::cos(z), 1e-15);
        EXPECT_NEAR(v.f_rr[0], -4 * a * a * std::sin(z), 1e-15);
        EXPECT_NEAR(v.f_t[0], 2 * b * std::cos(z), 1e-15);
    }
}

TEST(Features, DerivativesMatchCentralDifferences) {
    const auto basis = random_basis(4, 2.0, 11);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    const double h = 1e-5;
    double worst = 0.0;
    for (int probe = 0; probe < 1000; ++probe) {
        const double r = u(rng), t = u(rng);
        const auto v = basis.eval(r, t);
        const auto rp = basis.eval(r + h, t), rm = basis.eval(r - h, t);
        const auto tp = basis.eval(r, t + h), tm = basis.eval(r, t - h);
        for (int j = 0; j < basis.width(); ++j) {
            const double fd_r = (rp.f[j] - rm.f[j]) / (2 * h);
            const double fd_rr = (rp.f_r[j] - rm.f_r[j]) / (2 * h);
            const double fd_t = (tp.f[j] - tm.f[j]) / (2 * h);
            worst = std::max({worst, std::abs(v.f_r[j] - fd_r) / (1 + std::abs(v.f_r[j])),
                              std::abs(v.f_rr[j] - fd_rr) / (1 + std::abs(v.f_rr[j])),
                              std::abs(v.f_t[j] - fd_t) / (1 + std::abs(v.f_t[j]))});
        }
    }
    EXPECT_LE(worst, 1e-6);
}

TEST(Features, BatchMatchesPointwise) {
    const auto basis = random_basis(3, 1.5, 2);
    const std::vector<Point> pts{{0.1, 0.2}, {0.9, 0.4}, {0.0, 1.0}};
    const auto m = basis.eval_all(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto v = basis.eval(pts[i].r, pts[i].t);
        EXPECT_LE((m.f.row(i).transpose() - v.f).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_LE((m.f_rr.row(i).transpose() - v.f_rr).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(Features, ContiguousBlocksRequired) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
    EXPECT_THROW(FeatureBasis({Activation::Sin, Activation::Tanh, Activation::Sin}, z, z, z, {}), ConfigError);
    EXPECT_THROW(FeatureBasis({Activation::Sin}, z, z, z, {}), ConfigError);
}

TEST(Assembly, RowBookkeeping) {
    const auto basis = random_basis(2, 1.0, 3);
    const auto colloc = CollocationSet::tensor(11, 9);
    const auto sys = assemble_system(basis, {0.5, 0.2}, colloc);
    EXPECT_EQ(static_cast<std::size_t>(sys.a.rows()), colloc.rows());
    EXPECT_EQ(colloc.rows(), 10u * 8 + 9 + 10 + 10);
    EXPECT_EQ(sys.a.cols(), basis.width());
}

TEST(Assembly, ZeroFluxRightHandSide) {
    LearningHyper h;
    h.ic = 3.0;
    const auto basis = random_basis(2, 1.0, 3, h);
    const auto colloc = CollocationSet::tensor(6, 5);
    const auto sys = assemble_system(basis, {0.5, 0.0}, colloc);
    const auto n_pde = colloc.pde.size(), n_ic = colloc.ic.size();
    for (Eigen::Index i = 0; i < sys.b.size(); ++i) {
        const bool ic = static_cast<std::size_t>(i) >= n_pde && static_cast<std::size_t>(i) < n_pde + n_ic;
        EXPECT_EQ(sys.b[i], ic ? 3.0 : 0.0);
    }
}

TEST(Assembly, BiasOnlyNodeOracle) {
    const FeatureBasis basis({Activation::Tanh}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1),
                             Eigen::VectorXd::Constant(1, 0.6), {});
    const auto colloc = CollocationSet::tensor(5, 4);
    const auto sys = assemble_system(basis, {2.0, 0.0}, colloc);
    const auto n_pde = colloc.pde.size(), n_ic = colloc.ic.size();
    for (Eigen::Index i = 0; i < sys.a.rows(); ++i) {
        const bool ic = static_cast<std::size_t>(i) >= n_pde && static_cast<std::size_t>(i) < n_pde + n_ic;
        EXPECT_DOUBLE_EQ(sys.a(i, 0), ic ? std::tanh(0.6) : 0.0);
    }
}

TEST(Assembly, RejectsPdePointAtCentre) {
    auto colloc = CollocationSet::tensor(5, 4);
    colloc.pde.push_back({0.0, 0.5});
    EXPECT_THROW(assemble_system(random_basis(1, 1.0, 1), {1.0, 0.1}, colloc), ConfigError);
}

TEST(Solve, OverdeterminedMatchesQrOracle) {
    const auto basis = random_basis(4, 1.0, 9);
    const auto sys = assemble_system(basis, {0.7, -0.4}, CollocationSet::tensor(8, 8));
    const double lam = 1e-3;
    const auto w = solve_regularized(sys, lam);
    Eigen::MatrixXd m = sys.a.transpose() * sys.a;
    m.diagonal().array() += lam;
    const Eigen::VectorXd oracle = m.colPivHouseholderQr().solve(sys.a.transpose() * sys.b);
    EXPECT_LE((w - oracle).norm() / oracle.norm(), 1e-10);
}

TEST(Solve, UnderdeterminedUsesDualForm) {
    const auto basis = random_basis(20, 1.0, 4);
    const auto sys = assemble_system(basis, {0.7, -0.4}, CollocationSet::tensor(4, 5));
    ASSERT_LT(sys.a.rows(), sys.a.cols());
    const double lam = 1e-4;
    const auto w = solve_regularized(sys, lam);
    // the primal regularized solution equals the dual one
    Eigen::MatrixXd m = sys.a.transpose() * sys.a;
    m.diagonal().array() += lam;
    const Eigen::VectorXd oracle = m.colPivHouseholderQr().solve(sys.a.transpose() * sys.b);
    EXPECT_LE((w - oracle).norm() / oracle.norm(), 1e-8);
}

TEST(Solve, ZeroLambdaRetriesOnSingularSystem) {
    LinearSystem sys;
    sys.a = Eigen::MatrixXd::Ones(6, 2);
    sys.b = Eigen::VectorXd::Ones(6);
    Eigen::VectorXd w;
    ASSERT_NO_THROW(w = solve_regularized(sys, 0.0));
    EXPECT_NEAR(w.sum(), 1.0, 1e-6);
}

TEST(Solve, NonFiniteSystemIsConditioningError) {
    LinearSystem sys;
    sys.a = Eigen::MatrixXd::Ones(4, 2);
    sys.a(1, 1) = std::nan("");
    sys.b = Eigen::VectorXd::Ones(4);
    EXPECT_THROW(solve_regularized(sys, 1e-6), ConditioningError);
}

TEST(FineTune, ZeroFluxIsConstant) {
    const auto sol = fine_tune(default_basis(), {0.8, 0.0}, CollocationSet::tensor());
    const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(64, 0, 1), t = Eigen::VectorXd::LinSpaced(61, 0, 1);
    EXPECT_LE((sol.eval_grid(r, t).array() - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(FineTune, LseRecomputesIndependently) {
    const auto colloc = CollocationSet::tensor();
    const Nondimensional task{0.6, 0.3};
    const auto sol = fine_tune(default_basis(), task, colloc);
    const auto sys = assemble_system(*default_basis(), task, colloc);
    const double lse = (sys.a * sol.weights() - sys.b).squaredNorm();
    EXPECT_NEAR(sol.lse(), lse, 1e-10 * lse);
    const auto again = fine_tune(default_basis(), task, colloc);
    EXPECT_EQ(again.weights(), sol.weights());
}

TEST(FineTune, PreparedSystemAgrees) {
    const auto colloc = CollocationSet::tensor();
    const PreparedSystem prepared(default_basis(), colloc);
    for (Nondimensional task : {Nondimensional{0.05, 0.4}, Nondimensional{3.0, -0.2}}) {
        const auto a = fine_tune(default_basis(), task, colloc);
        const auto b = prepared.solve(task);
        const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(64, 0, 1), t = Eigen::VectorXd::LinSpaced(61, 0, 1);
        // weights are ill-determined along near-null directions, predictions are not
        EXPECT_LE((a.eval_grid(r, t) - b.eval_grid(r, t)).cwiseAbs().maxCoeff(), 1e-5);
        EXPECT_NEAR(a.lse(), b.lse(), 1e-4 * a.lse());
    }
}

TEST(FineTune, RegularizationIncreasesResidual) {
    const auto colloc = CollocationSet::tensor(31, 33);
    const Nondimensional task{0.4, 0.5};
    double last = -1.0;
    for (double lam : {1e-8, 1e-7, 1e-6, 1e-4, 1e-2}) {
        LearningHyper h = default_basis()->hyper();
        h.pi = lam;
        const auto b = std::make_shared<const FeatureBasis>(default_basis()->with_hyper(h));
        const double lse = fine_tune(b, task, colloc).lse();
        EXPECT_GE(lse, last * (1 - 1e-9));
        last = lse;
    }
}

TEST(Evaluation, DomainAndPermutation) {
    const auto sol = fine_tune(default_basis(), {0.5, 0.3}, CollocationSet::tensor());
    EXPECT_THROW(sol.eval(std::vector<Point>{{0.5, 1.01}}), DomainError);
    EXPECT_THROW(sol.eval(std::vector<Point>{{-0.1, 0.5}}), DomainError);
    const std::vector<Point> pts{{0.1, 0.2}, {0.7, 0.9}, {1.0, 0.5}};
    const std::vector<Point> perm{pts[2], pts[0], pts[1]};
    const auto a = sol.eval(pts), b = sol.eval(perm);
    EXPECT_EQ(b[0], a[2]);
    EXPECT_EQ(b[1], a[0]);
    EXPECT_EQ(b[2], a[1]);
}

TEST(Evaluation, GridValuesMatchPointValues) {
    const auto sol = fine_tune(default_basis(), {0.5, 0.3}, CollocationSet::tensor());
    const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(64, 0, 1), t = Eigen::VectorXd::LinSpaced(61, 0, 1);
    const auto grid = sol.eval_grid(r, t);
    const auto flat = sol.eval(label_points());
    for (int i = 0; i < 61; ++i)
        for (int k = 0; k < 64; ++k) EXPECT_NEAR(grid(i, k), flat[i * 64 + k], 1e-11);
}

TEST(Evaluation, IrregularTimesDifferFromGridInterpolation) {
    const auto sol = fine_tune(default_basis(), {6.0, 0.05}, CollocationSet::tensor());
    double worst = 0.0;
    for (double s : {37.0, 911.0, 3599.0}) {
        const double t = s / 3600.0;
        const int i = static_cast<int>(std::floor(t * 60));
        const double t0 = i / 60.0, t1 = (i + 1) / 60.0;
        const double lin = sol.eval(1.0, t0) + (sol.eval(1.0, t1) - sol.eval(1.0, t0)) * (t - t0) / (t1 - t0);
        worst = std::max(worst, std::abs(sol.eval(1.0, t) - lin));
    }
    EXPECT_GT(worst, 1e-5);
}

TEST(Serialization, RoundTripAndVersion) {
    const auto path = testing::TempDir() + "/basis_roundtrip.json";
    default_basis()->save(path);
    const auto b = FeatureBasis::load(path);
    EXPECT_EQ(b.width(), default_basis()->width());
    EXPECT_EQ(b.weight_r(), default_basis()->weight_r());
    EXPECT_EQ(b.bias(), default_basis()->bias());
    EXPECT_EQ(b.hyper().pi, default_basis()->hyper().pi);
    auto j = default_basis()->to_json();
    j["format_version"] = 99;
    EXPECT_THROW(FeatureBasis::from_json(j), FormatError);
}
