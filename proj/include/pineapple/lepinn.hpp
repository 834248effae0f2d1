#pragma once

// Shallow physics-informed surrogate: a frozen random-feature hidden layer
// with analytic derivatives, and a closed-form Tikhonov least-squares solve
// for the output weights.
//
// A node j computes f_j(r, t) = act_j(a_j (2r - 1) + b_j (2t - 1) + c_j), so
// the hidden layer sees inputs centred on [-1, 1]^2.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pineapple/core_model.hpp"

namespace pineapple {

enum class Activation { Sin, Silu, Tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Weights of the least-squares rows and the Tikhonov term.
struct LearningHyper {
    double pi = 1e-10;  // lambda_PI >= 0
    double pde = 1.0;   // lambda_PDE > 0
    double ic = 1.0;    // lambda_IC > 0
    double bc = 1.0;    // lambda_BC > 0

    void validate() const;
};

struct BasisProvenance {
    std::string run_id;
    std::uint64_t seed = 0;
};

struct Point {
    double r = 0.0;
    double t = 0.0;
};

/// Per-node values at a single point.
struct FeatureValues {
    Eigen::VectorXd f, f_r, f_rr, f_t;
};

/// Per-node values at many points; one row per point.
struct FeatureMatrices {
    Eigen::MatrixXd f, f_r, f_rr, f_t;
};

class FeatureBasis {
public:
    FeatureBasis(std::vector<Activation> tags, Eigen::VectorXd weight_r, Eigen::VectorXd weight_t,
                 Eigen::VectorXd bias, LearningHyper hyper, BasisProvenance provenance = {});

    int width() const { return static_cast<int>(tags_.size()); }
    const std::vector<Activation>& tags() const { return tags_; }
    const Eigen::VectorXd& weight_r() const { return weight_r_; }
    const Eigen::VectorXd& weight_t() const { return weight_t_; }
    const Eigen::VectorXd& bias() const { return bias_; }
    const LearningHyper& hyper() const { return hyper_; }
    const BasisProvenance& provenance() const { return provenance_; }

    FeatureBasis with_hyper(const LearningHyper& hyper) const;

    FeatureValues eval(double r, double t) const;

    /// Values only (no derivatives), one row per point.
    Eigen::MatrixXd values(const std::vector<Point>& points) const;
    FeatureMatrices eval_all(const std::vector<Point>& points) const;

    nlohmann::json to_json() const;
    static FeatureBasis from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static FeatureBasis load(const std::string& path);

    static constexpr int kFormatVersion = 1;

private:
    std::vector<Activation> tags_;
    Eigen::VectorXd weight_r_, weight_t_, bias_;
    LearningHyper hyper_;
    BasisProvenance provenance_;
};

// ---------------------------------------------------------------------------

struct CollocationSet {
    std::vector<Point> pde;
    std::vector<Point> ic;
    std::vector<Point> center;
    std::vector<Point> surface;

    /// Tensor grid with n_t times and n_r radii on [0,1]; PDE rows at r > 0,
    /// t > 0; IC at every radius; BC rows at every t > 0.
    static CollocationSet tensor(int n_t = 61, int n_r = 64);

    std::size_t rows() const { return pde.size() + ic.size() + center.size() + surface.size(); }
    void validate() const;
};

struct LinearSystem {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
};

/// Rows: lambda_PDE (f_t - alpha (f_rr + 2 f_r / r)) = 0, lambda_IC f = lambda_IC,
/// lambda_BC f_r(0,t) = 0, lambda_BC f_r(1,t) = lambda_BC beta.
LinearSystem assemble_system(const FeatureBasis& basis, const Nondimensional& task, const CollocationSet& colloc);

class FittedSolution {
public:
    FittedSolution(std::shared_ptr<const FeatureBasis> basis, Nondimensional task, Eigen::VectorXd weights,
                   double lse);

    const FeatureBasis& basis() const { return *basis_; }
    std::shared_ptr<const FeatureBasis> basis_ptr() const { return basis_; }
    const Nondimensional& task() const { return task_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    double lse() const { return lse_; }

    double eval(double r, double t) const;
    /// Throws DomainError for any point outside [0,1]^2.
    Eigen::VectorXd eval(const std::vector<Point>& points) const;
    /// Values on a tensor grid, rows = times.
    Eigen::MatrixXd eval_grid(const Eigen::VectorXd& r, const Eigen::VectorXd& t) const;

private:
    std::shared_ptr<const FeatureBasis> basis_;
    Nondimensional task_;
    Eigen::VectorXd weights_;
    double lse_;
};

/// Solves the regularized normal equations (or their dual when the system is
/// under-determined). Throws ConditioningError when the factorization fails
/// even after the lambda_PI = 1e-10 retry.
Eigen::VectorXd solve_regularized(const LinearSystem& system, double lambda_pi);

FittedSolution fine_tune(std::shared_ptr<const FeatureBasis> basis, const Nondimensional& task,
                         const CollocationSet& colloc);

/// Precomputed Gram blocks for one (basis, collocation) pair. The normal
/// matrix is quadratic in alpha and the right-hand side affine in beta, so a
/// new task costs one n_h x n_h Cholesky factorization.
class PreparedSystem {
public:
    PreparedSystem(std::shared_ptr<const FeatureBasis> basis, const CollocationSet& colloc);

    FittedSolution solve(const Nondimensional& task) const;
    /// Output weights without the residual evaluation.
    Eigen::VectorXd solve_weights(const Nondimensional& task) const;
    double lse(const Nondimensional& task, const Eigen::VectorXd& w) const;

    const FeatureBasis& basis() const { return *basis_; }
    std::shared_ptr<const FeatureBasis> basis_ptr() const { return basis_; }
    bool overdetermined() const { return overdetermined_; }

private:
    Eigen::MatrixXd normal_matrix(double alpha, double lambda_pi) const;

    std::shared_ptr<const FeatureBasis> basis_;
    CollocationSet colloc_;
    bool overdetermined_;
    // PDE rows split into time-derivative and spherical-Laplacian parts
    Eigen::MatrixXd pde_t_, pde_lap_, ic_, center_, surface_;
    Eigen::MatrixXd gram_tt_, gram_tl_, gram_ll_, gram_rest_;
    Eigen::VectorXd rhs_ic_, rhs_surface_;
};

}  // namespace pineapple
