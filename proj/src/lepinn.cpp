#include "pineapple/lepinn.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <set>

#include "pineapple/errors.hpp"

namespace pineapple {

namespace {

// Activation value and its first two derivatives with respect to z.
struct Act3 {
    double v, d1, d2;
};

inline Act3 activate(Activation a, double z) {
    switch (a) {
        case Activation::Sin: {
            const double s = std::sin(z);
            return {s, std::cos(z), -s};
        }
        case Activation::Tanh: {
            const double th = std::tanh(z);
            const double sech2 = 1.0 - th * th;
            return {th, sech2, -2.0 * th * sech2};
        }
        case Activation::Silu: {
            const double sg = 1.0 / (1.0 + std::exp(-z));
            const double ds = sg * (1.0 - sg);
            return {z * sg, sg + z * ds, ds * (2.0 + z * (1.0 - 2.0 * sg))};
        }
    }
    return {0.0, 0.0, 0.0};
}

inline double activate_value(Activation a, double z) {
    switch (a) {
        case Activation::Sin: return std::sin(z);
        case Activation::Tanh: return std::tanh(z);
        case Activation::Silu: return z / (1.0 + std::exp(-z));
    }
    return 0.0;
}

void check_point(const Point& p) {
    if (!(p.r >= 0.0 && p.r <= 1.0 && p.t >= 0.0 && p.t <= 1.0)) {
        throw DomainError("point (" + std::to_string(p.r) + ", " + std::to_string(p.t) + ") outside [0,1]^2");
    }
}

Eigen::VectorXd json_vector(const nlohmann::json& j, const char* key, int n) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (static_cast<int>(v.size()) != n) throw FormatError(std::string("basis field '") + key + "' has wrong length");
    return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

}  // namespace

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Sin: return "sin";
        case Activation::Silu: return "silu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

Activation activation_from_string(std::string_view name) {
    if (name == "sin") return Activation::Sin;
    if (name == "silu") return Activation::Silu;
    if (name == "tanh") return Activation::Tanh;
    throw FormatError("unknown activation '" + std::string(name) + "'");
}

void LearningHyper::validate() const {
    if (!(std::isfinite(pi) && pi >= 0.0)) throw ConfigError("lambda_PI must be >= 0");
    for (double v : {pde, ic, bc})
        if (!(std::isfinite(v) && v > 0.0)) throw ConfigError("lambda_PDE, lambda_IC, lambda_BC must be > 0");
}

// ---------------------------------------------------------------------------

FeatureBasis::FeatureBasis(std::vector<Activation> tags, Eigen::VectorXd weight_r, Eigen::VectorXd weight_t,
                           Eigen::VectorXd bias, LearningHyper hyper, BasisProvenance provenance)
    : tags_(std::move(tags)),
      weight_r_(std::move(weight_r)),
      weight_t_(std::move(weight_t)),
      bias_(std::move(bias)),
      hyper_(hyper),
      provenance_(std::move(provenance)) {
    const auto n = static_cast<Eigen::Index>(tags_.size());
    if (n == 0) throw ConfigError("feature basis needs at least one node");
    if (weight_r_.size() != n || weight_t_.size() != n || bias_.size() != n)
        throw ConfigError("feature basis arrays have inconsistent lengths");
    if (!weight_r_.allFinite() || !weight_t_.allFinite() || !bias_.allFinite())
        throw ConfigError("feature basis weights must be finite");
    hyper_.validate();
    // activation tags form contiguous blocks
    std::set<Activation> seen;
    for (std::size_t j = 0; j < tags_.size(); ++j) {
        if (j > 0 && tags_[j] == tags_[j - 1]) continue;
        if (!seen.insert(tags_[j]).second) throw ConfigError("activation tags must form contiguous blocks");
    }
}

FeatureBasis FeatureBasis::with_hyper(const LearningHyper& hyper) const {
    return FeatureBasis(tags_, weight_r_, weight_t_, bias_, hyper, provenance_);
}

FeatureValues FeatureBasis::eval(double r, double t) const {
    const int n = width();
    FeatureValues out;
    out.f.resize(n);
    out.f_r.resize(n);
    out.f_rr.resize(n);
    out.f_t.resize(n);
    const double x = 2.0 * r - 1.0;
    const double y = 2.0 * t - 1.0;
    for (int j = 0; j < n; ++j) {
        const double a = 2.0 * weight_r_[j];
        const double b = 2.0 * weight_t_[j];
        const auto act = activate(tags_[j], weight_r_[j] * x + weight_t_[j] * y + bias_[j]);
        out.f[j] = act.v;
        out.f_r[j] = a * act.d1;
        out.f_rr[j] = a * a * act.d2;
        out.f_t[j] = b * act.d1;
    }
    return out;
}

Eigen::MatrixXd FeatureBasis::values(const std::vector<Point>& points) const {
    const auto m = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd out(m, width());
    for (int j = 0; j < width(); ++j) {
        const double wr = weight_r_[j], wt = weight_t_[j], c = bias_[j];
        const Activation act = tags_[j];
        for (Eigen::Index i = 0; i < m; ++i) {
            const double z = wr * (2.0 * points[i].r - 1.0) + wt * (2.0 * points[i].t - 1.0) + c;
            out(i, j) = activate_value(act, z);
        }
    }
    return out;
}

FeatureMatrices FeatureBasis::eval_all(const std::vector<Point>& points) const {
    const auto m = static_cast<Eigen::Index>(points.size());
    FeatureMatrices out;
    out.f.resize(m, width());
    out.f_r.resize(m, width());
    out.f_rr.resize(m, width());
    out.f_t.resize(m, width());
    for (int j = 0; j < width(); ++j) {
        const double wr = weight_r_[j], wt = weight_t_[j], c = bias_[j];
        const double a = 2.0 * wr, b = 2.0 * wt;
        const Activation act = tags_[j];
        for (Eigen::Index i = 0; i < m; ++i) {
            const double z = wr * (2.0 * points[i].r - 1.0) + wt * (2.0 * points[i].t - 1.0) + c;
            const auto v = activate(act, z);
            out.f(i, j) = v.v;
            out.f_r(i, j) = a * v.d1;
            out.f_rr(i, j) = a * a * v.d2;
            out.f_t(i, j) = b * v.d1;
        }
    }
    return out;
}

nlohmann::json FeatureBasis::to_json() const {
    nlohmann::json blocks = nlohmann::json::array();
    for (std::size_t j = 0; j < tags_.size();) {
        std::size_t k = j;
        while (k < tags_.size() && tags_[k] == tags_[j]) ++k;
        blocks.push_back({{"activation", to_string(tags_[j])}, {"count", k - j}});
        j = k;
    }
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"format", "pineapple-feature-basis"},
            {"format_version", kFormatVersion},
            {"hidden_width", width()},
            {"blocks", blocks},
            {"weight_r", vec(weight_r_)},
            {"weight_t", vec(weight_t_)},
            {"bias", vec(bias_)},
            {"lambda", {{"pi", hyper_.pi}, {"pde", hyper_.pde}, {"ic", hyper_.ic}, {"bc", hyper_.bc}}},
            {"provenance", {{"run_id", provenance_.run_id}, {"seed", provenance_.seed}}}};
}

FeatureBasis FeatureBasis::from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string()) != "pineapple-feature-basis") throw FormatError("not a feature-basis file");
        const int version = j.at("format_version").get<int>();
        if (version != kFormatVersion)
            throw FormatError("unsupported basis format_version " + std::to_string(version));
        const int n = j.at("hidden_width").get<int>();
        std::vector<Activation> tags;
        for (const auto& block : j.at("blocks")) {
            const auto act = activation_from_string(block.at("activation").get<std::string>());
            tags.insert(tags.end(), block.at("count").get<std::size_t>(), act);
        }
        if (static_cast<int>(tags.size()) != n) throw FormatError("basis blocks do not sum to hidden_width");
        const auto& l = j.at("lambda");
        LearningHyper hyper{l.at("pi").get<double>(), l.at("pde").get<double>(), l.at("ic").get<double>(),
                            l.at("bc").get<double>()};
        BasisProvenance prov;
        if (j.contains("provenance")) {
            prov.run_id = j.at("provenance").value("run_id", std::string());
            prov.seed = j.at("provenance").value("seed", std::uint64_t{0});
        }
        return FeatureBasis(std::move(tags), json_vector(j, "weight_r", n), json_vector(j, "weight_t", n),
                            json_vector(j, "bias", n), hyper, prov);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed basis file: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid basis file: ") + e.what());
    }
}

void FeatureBasis::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write basis file " + path);
    out << to_json().dump(1) << '\n';
}

FeatureBasis FeatureBasis::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open basis file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return from_json(j);
}

// ---------------------------------------------------------------------------

CollocationSet CollocationSet::tensor(int n_t, int n_r) {
    if (n_t < 2 || n_r < 3) throw ConfigError("collocation grid too small");
    CollocationSet c;
    for (int i = 0; i < n_t; ++i) {
        const double t = static_cast<double>(i) / (n_t - 1);
        for (int k = 0; k < n_r; ++k) {
            const double r = static_cast<double>(k) / (n_r - 1);
            if (i == 0) {
                c.ic.push_back({r, 0.0});
            } else if (k > 0) {
                c.pde.push_back({r, t});
            }
        }
        if (i > 0) {
            c.center.push_back({0.0, t});
            c.surface.push_back({1.0, t});
        }
    }
    return c;
}

void CollocationSet::validate() const {
    if (pde.empty() || ic.empty() || center.empty() || surface.empty())
        throw ConfigError("collocation set needs points in every block");
    for (const auto* block : {&pde, &ic, &center, &surface})
        for (const auto& p : *block) check_point(p);
    for (const auto& p : pde)
        if (p.r == 0.0) throw ConfigError("PDE collocation point at r = 0");
}

LinearSystem assemble_system(const FeatureBasis& basis, const Nondimensional& task, const CollocationSet& colloc) {
    colloc.validate();
    const auto& h = basis.hyper();
    const int n = basis.width();
    LinearSystem sys;
    sys.a.resize(static_cast<Eigen::Index>(colloc.rows()), n);
    sys.b.setZero(static_cast<Eigen::Index>(colloc.rows()));

    Eigen::Index row = 0;
    {
        const auto m = basis.eval_all(colloc.pde);
        for (std::size_t i = 0; i < colloc.pde.size(); ++i, ++row) {
            const double inv_r = 1.0 / colloc.pde[i].r;
            const auto ii = static_cast<Eigen::Index>(i);
            sys.a.row(row) =
                h.pde * (m.f_t.row(ii) - task.alpha * (m.f_rr.row(ii) + 2.0 * inv_r * m.f_r.row(ii)));
        }
    }
    {
        const Eigen::MatrixXd f = basis.values(colloc.ic);
        for (Eigen::Index i = 0; i < f.rows(); ++i, ++row) {
            sys.a.row(row) = h.ic * f.row(i);
            sys.b[row] = h.ic;
        }
    }
    {
        const auto m = basis.eval_all(colloc.center);
        for (Eigen::Index i = 0; i < m.f_r.rows(); ++i, ++row) sys.a.row(row) = h.bc * m.f_r.row(i);
    }
    {
        const auto m = basis.eval_all(colloc.surface);
        for (Eigen::Index i = 0; i < m.f_r.rows(); ++i, ++row) {
            sys.a.row(row) = h.bc * m.f_r.row(i);
            sys.b[row] = h.bc * task.beta;
        }
    }
    return sys;
}

namespace {

template <typename Matrix>
std::optional<Eigen::LLT<Eigen::MatrixXd>> try_factor(Matrix&& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(std::forward<Matrix>(m));
    if (llt.info() != Eigen::Success) return std::nullopt;
    return llt;
}

}  // namespace

Eigen::VectorXd solve_regularized(const LinearSystem& sys, double lambda_pi) {
    if (!sys.a.allFinite() || !sys.b.allFinite()) throw ConditioningError("assembled system is not finite");
    const bool over = sys.a.rows() >= sys.a.cols();
    auto attempt = [&](double lam) -> std::optional<Eigen::VectorXd> {
        if (over) {
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(sys.a.cols(), sys.a.cols());
            m.selfadjointView<Eigen::Lower>().rankUpdate(sys.a.transpose());
            m.diagonal().array() += lam;
            auto llt = try_factor(m);
            if (!llt) return std::nullopt;
            Eigen::VectorXd w = llt->solve(sys.a.transpose() * sys.b);
            if (!w.allFinite()) return std::nullopt;
            return w;
        }
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(sys.a.rows(), sys.a.rows());
        m.selfadjointView<Eigen::Lower>().rankUpdate(sys.a);
        m.diagonal().array() += lam;
        auto llt = try_factor(m);
        if (!llt) return std::nullopt;
        Eigen::VectorXd w = sys.a.transpose() * llt->solve(sys.b);
        if (!w.allFinite()) return std::nullopt;
        return w;
    };
    if (auto w = attempt(lambda_pi)) return *w;
    if (lambda_pi == 0.0) {
        if (auto w = attempt(1e-10)) return *w;
    }
    throw ConditioningError("regularized normal equations are not positive definite");
}

FittedSolution fine_tune(std::shared_ptr<const FeatureBasis> basis, const Nondimensional& task,
                         const CollocationSet& colloc) {
    const LinearSystem sys = assemble_system(*basis, task, colloc);
    Eigen::VectorXd w = solve_regularized(sys, basis->hyper().pi);
    const double lse = (sys.a * w - sys.b).squaredNorm();
    return FittedSolution(std::move(basis), task, std::move(w), lse);
}

// ---------------------------------------------------------------------------

FittedSolution::FittedSolution(std::shared_ptr<const FeatureBasis> basis, Nondimensional task,
                               Eigen::VectorXd weights, double lse)
    : basis_(std::move(basis)), task_(task), weights_(std::move(weights)), lse_(lse) {
    if (!weights_.allFinite()) throw ConditioningError("fitted output weights are not finite");
    if (weights_.size() != basis_->width()) throw ConfigError("output weight count differs from hidden width");
}

double FittedSolution::eval(double r, double t) const {
    check_point({r, t});
    return basis_->values({{r, t}}).row(0).dot(weights_);
}

Eigen::VectorXd FittedSolution::eval(const std::vector<Point>& points) const {
    for (const auto& p : points) check_point(p);
    return basis_->values(points) * weights_;
}

Eigen::MatrixXd FittedSolution::eval_grid(const Eigen::VectorXd& r, const Eigen::VectorXd& t) const {
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(r.size() * t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i)
        for (Eigen::Index j = 0; j < r.size(); ++j) pts.push_back({r[j], t[i]});
    const Eigen::VectorXd v = eval(pts);
    Eigen::MatrixXd out(t.size(), r.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) out.row(i) = v.segment(i * r.size(), r.size()).transpose();
    return out;
}

// ---------------------------------------------------------------------------

PreparedSystem::PreparedSystem(std::shared_ptr<const FeatureBasis> basis, const CollocationSet& colloc)
    : basis_(std::move(basis)), colloc_(colloc) {
    colloc_.validate();
    const auto& h = basis_->hyper();
    const int n = basis_->width();
    overdetermined_ = static_cast<Eigen::Index>(colloc_.rows()) >= n;

    const auto m = basis_->eval_all(colloc_.pde);
    pde_t_ = h.pde * m.f_t;
    pde_lap_.resize(m.f_r.rows(), n);
    for (std::size_t i = 0; i < colloc_.pde.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        pde_lap_.row(ii) = h.pde * (m.f_rr.row(ii) + (2.0 / colloc_.pde[i].r) * m.f_r.row(ii));
    }
    ic_ = h.ic * basis_->values(colloc_.ic);
    center_ = h.bc * basis_->eval_all(colloc_.center).f_r;
    surface_ = h.bc * basis_->eval_all(colloc_.surface).f_r;

    if (!overdetermined_) return;

    Eigen::MatrixXd stacked(pde_t_.rows(), 2 * n);
    stacked << pde_t_, pde_lap_;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    g.selfadjointView<Eigen::Lower>().rankUpdate(stacked.transpose());
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    gram_tt_ = g.topLeftCorner(n, n);
    gram_tl_ = g.bottomLeftCorner(n, n).transpose();  // pde_t^T pde_lap
    gram_ll_ = g.bottomRightCorner(n, n);

    gram_rest_ = Eigen::MatrixXd::Zero(n, n);
    gram_rest_.selfadjointView<Eigen::Lower>().rankUpdate(ic_.transpose());
    gram_rest_.selfadjointView<Eigen::Lower>().rankUpdate(center_.transpose());
    gram_rest_.selfadjointView<Eigen::Lower>().rankUpdate(surface_.transpose());
    gram_rest_.triangularView<Eigen::StrictlyUpper>() = gram_rest_.transpose();

    rhs_ic_ = ic_.transpose() * Eigen::VectorXd::Constant(ic_.rows(), h.ic);
    rhs_surface_ = surface_.transpose() * Eigen::VectorXd::Constant(surface_.rows(), h.bc);
}

Eigen::MatrixXd PreparedSystem::normal_matrix(double alpha, double lambda_pi) const {
    Eigen::MatrixXd m = gram_tt_ - alpha * (gram_tl_ + gram_tl_.transpose()) + (alpha * alpha) * gram_ll_ + gram_rest_;
    m.diagonal().array() += lambda_pi;
    return m;
}

Eigen::VectorXd PreparedSystem::solve_weights(const Nondimensional& task) const {
    if (!overdetermined_) {
        return solve_regularized(assemble_system(*basis_, task, colloc_), basis_->hyper().pi);
    }
    const Eigen::VectorXd rhs = rhs_ic_ + task.beta * rhs_surface_;
    const double lam = basis_->hyper().pi;
    for (double l : {lam, lam == 0.0 ? 1e-10 : -1.0}) {
        if (l < 0.0) break;
        Eigen::LLT<Eigen::MatrixXd> llt(normal_matrix(task.alpha, l));
        if (llt.info() != Eigen::Success) continue;
        Eigen::VectorXd w = llt.solve(rhs);
        if (w.allFinite()) return w;
    }
    throw ConditioningError("regularized normal equations are not positive definite");
}

double PreparedSystem::lse(const Nondimensional& task, const Eigen::VectorXd& w) const {
    const double h_ic = basis_->hyper().ic;
    const double h_bc = basis_->hyper().bc;
    const Eigen::VectorXd pde = pde_t_ * w - task.alpha * (pde_lap_ * w);
    const Eigen::VectorXd ic = (ic_ * w).array() - h_ic;
    const Eigen::VectorXd center = center_ * w;
    const Eigen::VectorXd surface = (surface_ * w).array() - h_bc * task.beta;
    return pde.squaredNorm() + ic.squaredNorm() + center.squaredNorm() + surface.squaredNorm();
}

FittedSolution PreparedSystem::solve(const Nondimensional& task) const {
    Eigen::VectorXd w = solve_weights(task);
    const double l = lse(task, w);
    return FittedSolution(basis_, task, std::move(w), l);
}

}  // namespace pineapple
