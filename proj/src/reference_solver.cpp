#include "pineapple/reference_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "pineapple/errors.hpp"

namespace pineapple {

void SolverGrid::validate() const {
    if (n_r < 4) throw ConfigError("solver grid needs n_r >= 4");
    if (n_t < 2) throw ConfigError("solver grid needs n_t >= 2");
    if (substeps < 1) throw ConfigError("solver substeps must be >= 1");
    if (startup_steps < 0) throw ConfigError("solver startup_steps must be >= 0");
}

Eigen::VectorXd shell_volumes(int n_r) {
    const double h = 1.0 / (n_r - 1);
    Eigen::VectorXd w(n_r);
    for (int i = 0; i < n_r; ++i) {
        const double lo = std::max(0.0, (i - 0.5) * h);
        const double hi = std::min(1.0, (i + 0.5) * h);
        w[i] = (hi * hi * hi - lo * lo * lo) / 3.0;
    }
    return w;
}

double mean_concentration(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    const Eigen::VectorXd w = shell_volumes(static_cast<int>(row.size()));
    return 3.0 * row.dot(w.transpose());
}

namespace {

// One linear step (V - a L) c_new = (V + b L) c_old + g, with the operator L
// given by its face conductances. a = theta*dt*alpha, b = (1-theta)*dt*alpha.
class ShellOperator {
public:
    explicit ShellOperator(int n_r) : n_(n_r), vol_(shell_volumes(n_r)), face_(n_r - 1) {
        const double h = 1.0 / (n_r - 1);
        for (int i = 0; i < n_r - 1; ++i) {
            const double rf = (i + 0.5) * h;
            face_[i] = rf * rf / h;
        }
        lower_.resize(n_);
        diag_.resize(n_);
        upper_.resize(n_);
        rhs_.resize(n_);
        scratch_.resize(n_);
    }

    void step(Eigen::VectorXd& c, double dt, double alpha, double beta, double theta) {
        const double a = theta * dt * alpha;
        const double b = (1.0 - theta) * dt * alpha;
        for (int i = 0; i < n_; ++i) {
            const double kl = i > 0 ? face_[i - 1] : 0.0;
            const double kr = i < n_ - 1 ? face_[i] : 0.0;
            double flux_old = 0.0;
            if (i > 0) flux_old += kl * (c[i - 1] - c[i]);
            if (i < n_ - 1) flux_old += kr * (c[i + 1] - c[i]);
            rhs_[i] = vol_[i] * c[i] + b * flux_old;
            lower_[i] = -a * kl;
            upper_[i] = -a * kr;
            diag_[i] = vol_[i] + a * (kl + kr);
        }
        // outer face flux alpha*beta through unit area, applied over the full step
        rhs_[n_ - 1] += dt * alpha * beta;
        thomas(c);
    }

private:
    void thomas(Eigen::VectorXd& x) {
        scratch_[0] = upper_[0] / diag_[0];
        rhs_[0] /= diag_[0];
        for (int i = 1; i < n_; ++i) {
            const double m = diag_[i] - lower_[i] * scratch_[i - 1];
            scratch_[i] = upper_[i] / m;
            rhs_[i] = (rhs_[i] - lower_[i] * rhs_[i - 1]) / m;
        }
        x[n_ - 1] = rhs_[n_ - 1];
        for (int i = n_ - 2; i >= 0; --i) x[i] = rhs_[i] - scratch_[i] * x[i + 1];
    }

    int n_;
    Eigen::VectorXd vol_;
    std::vector<double> face_;
    std::vector<double> lower_, diag_, upper_, rhs_, scratch_;
};

}  // namespace

ConcentrationField solve_reference(const Nondimensional& task, const SolverGrid& grid) {
    grid.validate();
    if (!(task.alpha > 0.0) || !std::isfinite(task.alpha)) throw RangeError("solve_reference requires alpha > 0");
    if (!std::isfinite(task.beta)) throw RangeError("solve_reference requires finite beta");

    ConcentrationField field;
    field.r = Eigen::VectorXd::LinSpaced(grid.n_r, 0.0, 1.0);
    field.t = Eigen::VectorXd::LinSpaced(grid.n_t, 0.0, 1.0);
    field.values.resize(grid.n_t, grid.n_r);

    Eigen::VectorXd c = Eigen::VectorXd::Ones(grid.n_r);
    field.values.row(0) = c.transpose();
    if (task.beta == 0.0) {
        field.values.setOnes();
        return field;
    }

    ShellOperator op(grid.n_r);
    const double dt = 1.0 / (grid.n_t - 1) / grid.substeps;
    for (int it = 1; it < grid.n_t; ++it) {
        for (int s = 0; s < grid.substeps; ++s) {
            if (it == 1 && s == 0 && grid.startup_steps > 0) {
                const double sub = dt / grid.startup_steps;
                for (int k = 0; k < grid.startup_steps; ++k) op.step(c, sub, task.alpha, task.beta, 1.0);
            } else {
                op.step(c, dt, task.alpha, task.beta, 0.5);
            }
        }
        if (!c.allFinite()) throw DivergenceError("reference solver produced a non-finite concentration");
        field.values.row(it) = c.transpose();
    }
    return field;
}

ConcentrationField resample_radial(const ConcentrationField& field, const Eigen::VectorXd& r_target) {
    const Eigen::Index n = field.n_r();
    const double h = 1.0 / (n - 1);
    ConcentrationField out;
    out.r = r_target;
    out.t = field.t;
    out.values.resize(field.n_t(), r_target.size());
    for (Eigen::Index j = 0; j < r_target.size(); ++j) {
        const double x = r_target[j];
        if (x < 0.0 || x > 1.0) throw DomainError("resample target outside [0,1]");
        Eigen::Index k = static_cast<Eigen::Index>(std::floor(x / h)) - 1;
        k = std::clamp<Eigen::Index>(k, 0, n - 4);
        double wts[4];
        for (int a = 0; a < 4; ++a) {
            double w = 1.0;
            const double xa = (k + a) * h;
            for (int b = 0; b < 4; ++b) {
                if (b != a) w *= (x - (k + b) * h) / (xa - (k + b) * h);
            }
            wts[a] = w;
        }
        for (Eigen::Index i = 0; i < field.n_t(); ++i) {
            double v = 0.0;
            for (int a = 0; a < 4; ++a) v += wts[a] * field.values(i, k + a);
            out.values(i, j) = v;
        }
    }
    return out;
}

ConcentrationField label_field(const Nondimensional& task, int mesh, int substeps) {
    SolverGrid g;
    g.n_r = mesh;
    g.n_t = 61;
    g.substeps = substeps;
    return resample_radial(solve_reference(task, g), Eigen::VectorXd::LinSpaced(64, 0.0, 1.0));
}

double relative_l2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DomainError("relative_l2: shape mismatch");
    return (a - b).norm() / b.norm();
}

// ---------------------------------------------------------------------------

std::vector<double> tan_equals_identity_roots(int n) {
    // g(x) = sin x - x cos x has exactly one root in (k pi, k pi + pi/2) for k >= 1
    std::vector<double> roots;
    roots.reserve(n);
    for (int k = 1; k <= n; ++k) {
        double lo = k * std::numbers::pi;
        double hi = lo + 0.5 * std::numbers::pi - 1e-15 * k;
        auto g = [](double x) { return std::sin(x) - x * std::cos(x); };
        double glo = g(lo);
        for (int iter = 0; iter < 200 && hi - lo > 1e-15 * hi; ++iter) {
            const double mid = 0.5 * (lo + hi);
            const double gm = g(mid);
            if ((gm < 0.0) == (glo < 0.0)) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        roots.push_back(0.5 * (lo + hi));
    }
    return roots;
}

ConstantFluxSeries::ConstantFluxSeries(int n_terms) {
    if (n_terms < 20) throw ConfigError("constant-flux series needs at least 20 terms");
    roots_ = tan_equals_identity_roots(n_terms);
    inv_sin_.reserve(roots_.size());
    for (double l : roots_) inv_sin_.push_back(1.0 / (l * l * std::sin(l)));
}

double ConstantFluxSeries::operator()(double alpha, double beta, double r, double t) const {
    if (!(r >= 0.0 && r <= 1.0)) throw DomainError("series: r outside [0,1]");
    if (!(t >= 0.0)) throw DomainError("series: t < 0");
    if (beta == 0.0) return 1.0;
    double sum = 0.0;
    for (std::size_t n = 0; n < roots_.size(); ++n) {
        const double l = roots_[n];
        const double decay = std::exp(-l * l * alpha * t);
        if (decay == 0.0) break;
        // (2/r) sin(l r) -> 2 l as r -> 0
        const double radial = r > 1e-8 ? 2.0 * std::sin(l * r) / r : 2.0 * l * (1.0 - (l * r) * (l * r) / 6.0);
        sum += radial * inv_sin_[n] * decay;
    }
    return 1.0 + beta * (3.0 * alpha * t + 0.5 * r * r - 0.3 - sum);
}

ConcentrationField ConstantFluxSeries::field(double alpha, double beta, const Eigen::VectorXd& r,
                                             const Eigen::VectorXd& t) const {
    ConcentrationField f;
    f.r = r;
    f.t = t;
    f.values.resize(t.size(), r.size());
    for (Eigen::Index i = 0; i < t.size(); ++i)
        for (Eigen::Index j = 0; j < r.size(); ++j) f.values(i, j) = (*this)(alpha, beta, r[j], t[i]);
    // the series converges slowly at t = 0, where the value is known exactly
    for (Eigen::Index i = 0; i < t.size(); ++i)
        if (t[i] == 0.0) f.values.row(i).setOnes();
    return f;
}

double analytic_constant_flux(double alpha, double beta, double r, double t, int n_terms) {
    static thread_local std::map<int, ConstantFluxSeries> cache;
    auto it = cache.find(n_terms);
    if (it == cache.end()) it = cache.emplace(n_terms, ConstantFluxSeries(n_terms)).first;
    return it->second(alpha, beta, r, t);
}

// ---------------------------------------------------------------------------

ConcentrationField benchmark_reference(const Nondimensional& task, int n_t) {
    SolverGrid g;
    g.n_r = 1024;
    g.n_t = n_t;
    g.substeps = 16;
    return resample_radial(solve_reference(task, g), Eigen::VectorXd::LinSpaced(64, 0.0, 1.0));
}

std::vector<SolverBenchmarkRow> benchmark_solver(const Nondimensional& task, const std::vector<int>& meshes,
                                                 int repeats, int n_t) {
    if (repeats < 5) throw ConfigError("benchmark_solver needs repeats >= 5");
    for (int m : meshes) {
        if (std::find(kBenchmarkMeshes.begin(), kBenchmarkMeshes.end(), m) == kBenchmarkMeshes.end())
            throw ConfigError("benchmark mesh " + std::to_string(m) + " not in {16,...,1024}");
    }
    const Eigen::VectorXd label_r = Eigen::VectorXd::LinSpaced(64, 0.0, 1.0);
    const ConcentrationField reference = benchmark_reference(task, n_t);

    std::vector<SolverBenchmarkRow> rows;
    for (int m : meshes) {
        SolverGrid g;
        g.n_r = m;
        g.n_t = n_t;
        std::vector<double> ms;
        ConcentrationField field;
        for (int k = 0; k < repeats; ++k) {
            const auto t0 = std::chrono::steady_clock::now();
            field = solve_reference(task, g);
            const auto t1 = std::chrono::steady_clock::now();
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        SolverBenchmarkRow row;
        row.mesh = m;
        row.relative_error = relative_l2(resample_radial(field, label_r).values, reference.values);
        double mean = 0.0;
        for (double v : ms) mean += v;
        mean /= ms.size();
        double var = 0.0;
        for (double v : ms) var += (v - mean) * (v - mean);
        row.time_mean_ms = mean;
        row.time_sd_ms = std::sqrt(var / (ms.size() - 1));
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------

void write_label_csv(const std::string& path, const ConcentrationField& field) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write label file " + path);
    out << "t_hat,r_hat,c_hat\n";
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < field.n_t(); ++i)
        for (Eigen::Index j = 0; j < field.n_r(); ++j)
            out << field.t[i] << ',' << field.r[j] << ',' << field.values(i, j) << '\n';
}

ConcentrationField read_label_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open label file " + path);
    std::string line;
    std::getline(in, line);
    if (line != "t_hat,r_hat,c_hat") throw FormatError(path + ": unexpected label header");
    std::vector<double> ts, rs, cs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double t, r, c;
        char comma1, comma2;
        if (!(ss >> t >> comma1 >> r >> comma2 >> c)) throw FormatError(path + ": malformed row '" + line + "'");
        ts.push_back(t);
        rs.push_back(r);
        cs.push_back(c);
    }
    // rows are written time-major; recover the tensor grid
    std::size_t n_r = 0;
    while (n_r < ts.size() && ts[n_r] == ts[0]) ++n_r;
    if (n_r == 0 || ts.size() % n_r != 0) throw FormatError(path + ": label file is not a tensor grid");
    const std::size_t n_t = ts.size() / n_r;
    ConcentrationField f;
    f.r.resize(n_r);
    f.t.resize(n_t);
    f.values.resize(n_t, n_r);
    for (std::size_t i = 0; i < n_t; ++i) {
        f.t[i] = ts[i * n_r];
        for (std::size_t j = 0; j < n_r; ++j) {
            if (i == 0) f.r[j] = rs[j];
            f.values(i, j) = cs[i * n_r + j];
        }
    }
    return f;
}

}  // namespace pineapple
