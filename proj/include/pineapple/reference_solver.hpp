#pragma once

// Finite-volume / Crank-Nicolson solver for the nondimensional
// single-particle diffusion problem
//
//   dc/dt = alpha (1/r^2) d/dr (r^2 dc/dr),   r in [0,1], t in (0,1]
//   c(r,0) = 1,  dc/dr(0,t) = 0,  dc/dr(1,t) = beta
//
// plus the classical constant-flux series solution used as an oracle.

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pineapple/core_model.hpp"

namespace pineapple {

enum class TimeScheme { CrankNicolson };

struct SolverGrid {
    int n_r = 64;  // radial nodes, uniform on [0,1] including both ends
    int n_t = 61;  // output times, uniform on [0,1] including t = 0
    int substeps = 1;
    /// The first substep is replaced by this many implicit-Euler steps
    /// (Rannacher start-up) to damp the flux switch-on transient. 0 = pure CN.
    int startup_steps = 4;
    TimeScheme scheme = TimeScheme::CrankNicolson;

    void validate() const;
    static SolverGrid label_grid() { return {}; }
};

/// values(i_t, i_r) is the normalized concentration c/C_k.
struct ConcentrationField {
    Eigen::VectorXd r;
    Eigen::VectorXd t;
    Eigen::MatrixXd values;

    Eigen::Index n_r() const { return r.size(); }
    Eigen::Index n_t() const { return t.size(); }
    Eigen::VectorXd surface() const { return values.col(values.cols() - 1); }
};

/// Control-volume weights w_i with sum(w) = 1/3 (r^2 dr per node).
Eigen::VectorXd shell_volumes(int n_r);

/// 3 * sum_i w_i c_i, the volume-averaged concentration of one time row.
double mean_concentration(const Eigen::Ref<const Eigen::RowVectorXd>& row);

ConcentrationField solve_reference(const Nondimensional& task, const SolverGrid& grid = {});

/// Training/evaluation label: a fine solve (n_r = mesh, `substeps` CN steps
/// per output interval) resampled onto the 61 x 64 label grid.
ConcentrationField label_field(const Nondimensional& task, int mesh = 1024, int substeps = 16);

/// Cubic (4-point Lagrange) interpolation of every time row onto `r_target`.
ConcentrationField resample_radial(const ConcentrationField& field, const Eigen::VectorXd& r_target);

/// ||a - b||_F / ||b||_F.
double relative_l2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// ---------------------------------------------------------------------------

/// First `n` positive roots of tan(x) = x.
std::vector<double> tan_equals_identity_roots(int n);

/// Series solution of the constant-flux sphere problem,
///   c = 1 + beta [3 alpha t + r^2/2 - 3/10
///                 - (2/r) sum_n sin(l_n r) / (l_n^2 sin l_n) exp(-l_n^2 alpha t)].
class ConstantFluxSeries {
public:
    explicit ConstantFluxSeries(int n_terms = 2000);

    double operator()(double alpha, double beta, double r, double t) const;
    ConcentrationField field(double alpha, double beta, const Eigen::VectorXd& r, const Eigen::VectorXd& t) const;
    int n_terms() const { return static_cast<int>(roots_.size()); }

private:
    std::vector<double> roots_;
    std::vector<double> inv_sin_;  // 1 / (l^2 sin l)
};

/// Convenience wrapper; throws DomainError for r outside [0,1] or t < 0.
double analytic_constant_flux(double alpha, double beta, double r, double t, int n_terms = 2000);

// ---------------------------------------------------------------------------

struct SolverBenchmarkRow {
    int mesh = 0;
    double relative_error = 0.0;  // vs the finest mesh, on the label radial grid
    double time_mean_ms = 0.0;
    double time_sd_ms = 0.0;
};

inline const std::vector<int> kBenchmarkMeshes{16, 32, 64, 128, 256, 512, 1024};

/// Mesh 1024 with 16 substeps per output interval on the 64-point label radii.
ConcentrationField benchmark_reference(const Nondimensional& task, int n_t = 61);

/// Errors are measured against benchmark_reference, each mesh resampled onto
/// the 64-point label radius grid.
std::vector<SolverBenchmarkRow> benchmark_solver(const Nondimensional& task, const std::vector<int>& meshes,
                                                 int repeats, int n_t = 61);

// ---------------------------------------------------------------------------
// Label persistence: CSV (t_hat, r_hat, c_hat) plus a JSON sidecar.

void write_label_csv(const std::string& path, const ConcentrationField& field);
ConcentrationField read_label_csv(const std::string& path);

}  // namespace pineapple
