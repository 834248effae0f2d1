#include "pineapple/voltage_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pineapple/errors.hpp"

#ifndef PINEAPPLE_SOURCE_DATA_DIR
#define PINEAPPLE_SOURCE_DATA_DIR "data"
#endif

namespace pineapple {

namespace {

const char* term_name(CurveTerm::Type t) {
    switch (t) {
        case CurveTerm::Type::Const: return "const";
        case CurveTerm::Type::Tanh: return "tanh";
        case CurveTerm::Type::Exp: return "exp";
        case CurveTerm::Type::Power: return "power";
    }
    return "?";
}

CurveTerm::Type term_type(const std::string& s) {
    if (s == "const") return CurveTerm::Type::Const;
    if (s == "tanh") return CurveTerm::Type::Tanh;
    if (s == "exp") return CurveTerm::Type::Exp;
    if (s == "power") return CurveTerm::Type::Power;
    throw FormatError("unknown curve term type '" + s + "'");
}

std::size_t term_arity(CurveTerm::Type t) {
    switch (t) {
        case CurveTerm::Type::Const: return 1;
        case CurveTerm::Type::Power: return 2;
        default: return 3;
    }
}

}  // namespace

double CurveTerm::operator()(double x) const {
    switch (type) {
        case Type::Const: return coeffs[0];
        case Type::Tanh: return coeffs[0] * std::tanh(coeffs[1] * x + coeffs[2]);
        case Type::Exp: return coeffs[0] * std::exp(coeffs[1] * x + coeffs[2]);
        case Type::Power: return coeffs[0] * std::pow(x, coeffs[1]);
    }
    return 0.0;
}

EquilibriumPotentialCurve EquilibriumPotentialCurve::from_terms(std::string id, std::vector<CurveTerm> terms,
                                                                double lower, double upper, std::string source) {
    if (terms.empty()) throw FormatError("curve '" + id + "' has no terms");
    if (!(lower < upper)) throw FormatError("curve '" + id + "' has an empty domain");
    for (const auto& t : terms) {
        if (t.coeffs.size() != term_arity(t.type))
            throw FormatError("curve '" + id + "': " + term_name(t.type) + " term has wrong coefficient count");
        for (double c : t.coeffs)
            if (!std::isfinite(c)) throw FormatError("curve '" + id + "' has a non-finite coefficient");
    }
    EquilibriumPotentialCurve c;
    c.id_ = std::move(id);
    c.kind_ = Kind::Terms;
    c.lower_ = lower;
    c.upper_ = upper;
    c.source_ = std::move(source);
    c.terms_ = std::move(terms);
    return c;
}

EquilibriumPotentialCurve EquilibriumPotentialCurve::from_table(std::string id, std::vector<double> x,
                                                                std::vector<double> u, std::string source) {
    const std::size_t n = x.size();
    if (n < 2 || u.size() != n) throw FormatError("curve '" + id + "' table needs >= 2 (x, U) pairs");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(u[i])) throw FormatError("curve '" + id + "' table is not finite");
        if (i > 0 && !(x[i] > x[i - 1])) throw FormatError("curve '" + id + "' table x must increase strictly");
    }
    // Fritsch-Carlson slopes
    std::vector<double> delta(n - 1), m(n);
    for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (u[i + 1] - u[i]) / (x[i + 1] - x[i]);
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) m[i] = delta[i - 1] * delta[i] <= 0.0 ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (delta[i] == 0.0) {
            m[i] = m[i + 1] = 0.0;
            continue;
        }
        const double a = m[i] / delta[i], b = m[i + 1] / delta[i];
        const double s = a * a + b * b;
        if (s > 9.0) {
            const double tau = 3.0 / std::sqrt(s);
            m[i] = tau * a * delta[i];
            m[i + 1] = tau * b * delta[i];
        }
    }
    EquilibriumPotentialCurve c;
    c.id_ = std::move(id);
    c.kind_ = Kind::Table;
    c.lower_ = x.front();
    c.upper_ = x.back();
    c.source_ = std::move(source);
    c.x_ = std::move(x);
    c.u_ = std::move(u);
    c.slope_ = std::move(m);
    return c;
}

double EquilibriumPotentialCurve::operator()(double x) const {
    if (!(x >= lower_ && x <= upper_))
        throw CurveDomainError("curve '" + id_ + "' evaluated at " + std::to_string(x) + " outside its domain");
    double v = 0.0;
    if (kind_ == Kind::Terms) {
        for (const auto& t : terms_) v += t(x);
    } else {
        const auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(it - x_.begin()), 1, x_.size() - 1) - 1;
        const double h = x_[i + 1] - x_[i];
        const double s = (x - x_[i]) / h;
        const double s2 = s * s, s3 = s2 * s;
        v = (2 * s3 - 3 * s2 + 1) * u_[i] + (s3 - 2 * s2 + s) * h * slope_[i] + (-2 * s3 + 3 * s2) * u_[i + 1] +
            (s3 - s2) * h * slope_[i + 1];
    }
    if (!std::isfinite(v)) throw CurveDomainError("curve '" + id_ + "' is not finite at " + std::to_string(x));
    return v;
}

EquilibriumPotentialCurve EquilibriumPotentialCurve::tabulated(int n, double lo, double hi) const {
    if (n < 2) throw ConfigError("tabulation needs >= 2 points");
    std::vector<double> x(n), u(n);
    for (int i = 0; i < n; ++i) {
        x[i] = lo + (hi - lo) * i / (n - 1);
        u[i] = (*this)(x[i]);
    }
    return from_table(id_ + "_table", std::move(x), std::move(u), source_);
}

bool EquilibriumPotentialCurve::decreasing_on(double lo, double hi, int n) const {
    double prev = (*this)(lo);
    for (int i = 1; i < n; ++i) {
        const double v = (*this)(lo + (hi - lo) * i / (n - 1));
        if (!(v < prev)) return false;
        prev = v;
    }
    return true;
}

nlohmann::json EquilibriumPotentialCurve::to_json() const {
    nlohmann::json j;
    j["id"] = id_;
    j["kind"] = kind_ == Kind::Terms ? "terms" : "table";
    j["domain"] = {lower_, upper_};
    j["source"] = source_;
    if (kind_ == Kind::Terms) {
        j["terms"] = nlohmann::json::array();
        for (const auto& t : terms_) j["terms"].push_back({{"type", term_name(t.type)}, {"coeffs", t.coeffs}});
    } else {
        j["table"] = nlohmann::json::array();
        for (std::size_t i = 0; i < x_.size(); ++i) j["table"].push_back({x_[i], u_[i]});
    }
    return j;
}

EquilibriumPotentialCurve EquilibriumPotentialCurve::from_json(const nlohmann::json& j) {
    try {
        const std::string id = j.at("id");
        const std::string kind = j.at("kind");
        const std::string source = j.value("source", "");
        if (kind == "terms") {
            std::vector<CurveTerm> terms;
            for (const auto& t : j.at("terms")) terms.push_back({term_type(t.at("type")), t.at("coeffs").get<std::vector<double>>()});
            const auto& d = j.at("domain");
            return from_terms(id, std::move(terms), d.at(0), d.at(1), source);
        }
        if (kind == "table") {
            std::vector<double> x, u;
            for (const auto& p : j.at("table")) {
                x.push_back(p.at(0));
                u.push_back(p.at(1));
            }
            return from_table(id, std::move(x), std::move(u), source);
        }
        throw FormatError("curve '" + id + "' has unknown kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("curve file: ") + e.what());
    }
}

EquilibriumPotentialCurve EquilibriumPotentialCurve::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read curve file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return from_json(j);
}

std::string default_data_dir() {
    if (const char* env = std::getenv("PINEAPPLE_DATA_DIR"); env && *env) return env;
    return PINEAPPLE_SOURCE_DATA_DIR;
}

OcpPair OcpPair::load(const std::string& dir) {
    const std::filesystem::path d(dir);
    return {EquilibriumPotentialCurve::load((d / "lco.json").string()),
            EquilibriumPotentialCurve::load((d / "graphite.json").string())};
}

OcpPair OcpPair::defaults() { return load((std::filesystem::path(default_data_dir()) / "ocp").string()); }

// ---------------------------------------------------------------------------

double overvoltage(const CellParameters& params) {
    const auto& c = params.constants;
    const double thermal = 2.0 * c.gas_constant * c.temperature / c.faraday;
    const double eta_p = thermal * std::asinh(c.current * params.positive.geometric / (2.0 * params.positive.exchange_current));
    const double eta_n = thermal * std::asinh(c.current * params.negative.geometric / (2.0 * params.negative.exchange_current));
    return eta_p + eta_n + c.film_resistance * c.current;
}

VoltagePoint terminal_voltage(double y_p, double x_n, const CellParameters& params, const OcpPair& ocp) {
    if (!(params.positive.exchange_current > 0.0) || !(params.negative.exchange_current > 0.0))
        throw RangeError("exchange current densities must be > 0");
    VoltagePoint p;
    p.y_p = std::clamp(y_p, kStoichiometryClamp, 1.0 - kStoichiometryClamp);
    p.x_n = std::clamp(x_n, kStoichiometryClamp, 1.0 - kStoichiometryClamp);
    p.clamped = p.y_p != y_p || p.x_n != x_n;
    p.ocv = ocp.positive(p.y_p) - ocp.negative(p.x_n);
    p.overvoltage = overvoltage(params);
    p.v = p.ocv - p.overvoltage;
    return p;
}

void DischargeCurve::validate() const {
    if (t.size() != v.size()) throw FormatError("discharge curve: t and V lengths differ");
    if (t.empty()) throw EmptyCurveError("discharge curve '" + battery_id + "' is empty");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]) || !std::isfinite(v[i])) throw FormatError("discharge curve has non-finite samples");
        if (i > 0 && !(t[i] > t[i - 1])) throw FormatError("discharge curve times must increase strictly");
        if (v[i] < 2.0 || v[i] > 4.5) throw FormatError("discharge curve voltage outside [2.0, 4.5] V");
    }
    if (v.back() < cutoff) throw FormatError("discharge curve ends below its cutoff voltage");
}

// ---------------------------------------------------------------------------

namespace {

class BoundSurrogate final : public BoundSurface {
public:
    BoundSurrogate(std::shared_ptr<const PreparedSystem> prepared, const Eigen::VectorXd& t_hat)
        : prepared_(std::move(prepared)) {
        std::vector<Point> pts;
        for (Eigen::Index i = 0; i < t_hat.size(); ++i) {
            if (!(t_hat[i] >= 0.0 && t_hat[i] <= 1.0)) throw DomainError("surface time outside [0, 1]");
            pts.push_back({1.0, t_hat[i]});
        }
        phi_ = prepared_->basis().values(pts);
    }
    Eigen::VectorXd operator()(const Nondimensional& task) const override {
        return phi_ * prepared_->solve_weights(task);
    }

private:
    std::shared_ptr<const PreparedSystem> prepared_;
    Eigen::MatrixXd phi_;
};

class BoundReference final : public BoundSurface {
public:
    BoundReference(SolverGrid grid, const Eigen::VectorXd& t_hat) : grid_(grid), t_hat_(t_hat) {
        for (Eigen::Index i = 0; i < t_hat.size(); ++i)
            if (!(t_hat[i] >= 0.0 && t_hat[i] <= 1.0)) throw DomainError("surface time outside [0, 1]");
    }
    Eigen::VectorXd operator()(const Nondimensional& task) const override {
        const Eigen::VectorXd s = solve_reference(task, grid_).surface();
        const int n = static_cast<int>(s.size()) - 1;
        Eigen::VectorXd out(t_hat_.size());
        for (Eigen::Index i = 0; i < t_hat_.size(); ++i) {
            const double x = t_hat_[i] * n;
            const int k = std::min(static_cast<int>(std::floor(x)), n - 1);
            const double w = x - k;
            out[i] = (1.0 - w) * s[k] + w * s[k + 1];
        }
        return out;
    }

private:
    SolverGrid grid_;
    Eigen::VectorXd t_hat_;
};

}  // namespace

SurrogateSurface::SurrogateSurface(std::shared_ptr<const FeatureBasis> basis, const CollocationSet& colloc)
    : prepared_(std::make_shared<const PreparedSystem>(std::move(basis), colloc)) {}

SurrogateSurface::SurrogateSurface(std::shared_ptr<const PreparedSystem> prepared) : prepared_(std::move(prepared)) {}

std::unique_ptr<BoundSurface> SurrogateSurface::bind(const Eigen::VectorXd& t_hat) const {
    return std::make_unique<BoundSurrogate>(prepared_, t_hat);
}

ReferenceSurface::ReferenceSurface(int n_r, int n_t, int substeps) {
    grid_.n_r = n_r;
    grid_.n_t = n_t;
    grid_.substeps = substeps;
    grid_.validate();
}

std::unique_ptr<BoundSurface> ReferenceSurface::bind(const Eigen::VectorXd& t_hat) const {
    return std::make_unique<BoundReference>(grid_, t_hat);
}

// ---------------------------------------------------------------------------

VoltageSynthesizer::VoltageSynthesizer(ModelConfig config, OcpPair ocp, const SurfaceModel& surface,
                                       std::vector<double> times)
    : config_(std::move(config)), baseline_(config_.baseline()), ocp_(std::move(ocp)), times_(std::move(times)) {
    const double horizon = config_.constants.horizon;
    Eigen::VectorXd t_hat(times_.size());
    for (std::size_t i = 0; i < times_.size(); ++i) {
        if (!(times_[i] >= 0.0 && times_[i] <= horizon))
            throw DomainError("synthesis time " + std::to_string(times_[i]) + " s outside [0, T]");
        t_hat[i] = times_[i] / horizon;
    }
    surface_ = surface.bind(t_hat);
}

SynthesisResult VoltageSynthesizer::operator()(const ScalingFactors& factors, bool truncate) const {
    const CellParameters params = apply_scaling(baseline_, factors, config_.geometric_scaling);
    const TaskPair tasks = make_task_pair(params);
    const Eigen::VectorXd cp = (*surface_)(tasks.positive.nondimensional());
    const Eigen::VectorXd cn = (*surface_)(tasks.negative.nondimensional());
    const double scale_p = params.positive.initial_concentration / params.positive.max_concentration;
    const double scale_n = params.negative.initial_concentration / params.negative.max_concentration;

    SynthesisResult res;
    res.points.reserve(times_.size());
    for (std::size_t i = 0; i < times_.size(); ++i) {
        VoltagePoint p = terminal_voltage(cp[i] * scale_p, cn[i] * scale_n, params, ocp_);
        p.t = times_[i];
        res.points.push_back(p);
    }
    res.curve.current = params.constants.current;
    for (const auto& p : res.points) {
        if (truncate && p.v < res.curve.cutoff) break;
        res.curve.t.push_back(p.t);
        res.curve.v.push_back(p.v);
        res.clamped += p.clamped ? 1 : 0;
    }
    const std::size_t used = res.curve.size();
    res.implausible = used == 0 || static_cast<double>(res.clamped) / used > kImplausibleClampFraction;
    return res;
}

SynthesisResult synthesize_vt(const ScalingFactors& factors, const ModelConfig& config, const OcpPair& ocp,
                              const SurfaceModel& surface, const std::vector<double>& times, bool truncate) {
    return VoltageSynthesizer(config, ocp, surface, times)(factors, truncate);
}

std::vector<double> uniform_times(int n, double horizon) {
    if (n < 2) throw ConfigError("uniform_times needs n >= 2");
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = horizon * i / (n - 1);
    return t;
}

}  // namespace pineapple
