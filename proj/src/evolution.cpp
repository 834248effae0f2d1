#include "pineapple/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "pineapple/errors.hpp"

namespace pineapple {

std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix_seed(master);
    for (auto p : path) s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
    return s;
}

std::vector<int> argsort(const std::vector<double>& values) {
    std::vector<int> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        // NaN sorts last
        const double va = values[a], vb = values[b];
        if (std::isnan(va)) return false;
        if (std::isnan(vb)) return true;
        return va < vb;
    });
    return idx;
}

namespace {

int default_population(int n) { return 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(n)))); }

Eigen::VectorXd standard_normal(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = normal(rng);
    return z;
}

}  // namespace

// ---------------------------------------------------------------------------

Cmaes::Cmaes(Eigen::VectorXd mean, double sigma, CmaesOptions options)
    : n_(static_cast<int>(mean.size())), mean_(std::move(mean)), sigma_(sigma), rng_(options.seed) {
    lambda_ = options.population > 0 ? options.population : default_population(n_);
    init(Eigen::VectorXd::Ones(n_));
}

Cmaes::Cmaes(Eigen::VectorXd mean, const Eigen::VectorXd& sigmas, CmaesOptions options)
    : n_(static_cast<int>(mean.size())), mean_(std::move(mean)), sigma_(1.0), rng_(options.seed) {
    if (sigmas.size() != n_) throw ConfigError("cmaes: sigma vector length differs from dimension");
    lambda_ = options.population > 0 ? options.population : default_population(n_);
    init(sigmas);
}

void Cmaes::init(const Eigen::VectorXd& diag_scale) {
    if (n_ < 1) throw ConfigError("cmaes: empty search space");
    if (lambda_ < 2) throw ConfigError("cmaes: population must be >= 2");
    if (!(sigma_ > 0.0) || (diag_scale.array() <= 0.0).any()) throw ConfigError("cmaes: step sizes must be > 0");

    mu_ = lambda_ / 2;
    weights_.resize(mu_);
    for (int i = 0; i < mu_; ++i) weights_[i] = std::log(mu_ + 0.5) - std::log(i + 1.0);
    weights_ /= weights_.sum();
    mu_eff_ = 1.0 / weights_.squaredNorm();

    const double n = n_;
    c_sigma_ = (mu_eff_ + 2.0) / (n + mu_eff_ + 5.0);
    d_sigma_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff_ - 1.0) / (n + 1.0)) - 1.0) + c_sigma_;
    c_c_ = (4.0 + mu_eff_ / n) / (n + 4.0 + 2.0 * mu_eff_ / n);
    c_1_ = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff_);
    c_mu_ = std::min(1.0 - c_1_, 2.0 * (mu_eff_ - 2.0 + 1.0 / mu_eff_) / ((n + 2.0) * (n + 2.0) + mu_eff_));
    chi_n_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    cov_ = diag_scale.array().square().matrix().asDiagonal();
    p_sigma_ = Eigen::VectorXd::Zero(n_);
    p_c_ = Eigen::VectorXd::Zero(n_);
    decompose();
}

void Cmaes::decompose() {
    Eigen::MatrixXd sym = 0.5 * (cov_ + cov_.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    basis_ = eig.eigenvectors();
    diag_ = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt();
    cov_ = sym;
}

double Cmaes::max_step() const { return sigma_ * diag_.maxCoeff(); }

std::vector<Eigen::VectorXd> Cmaes::ask() {
    std::vector<Eigen::VectorXd> out;
    out.reserve(lambda_);
    for (int k = 0; k < lambda_; ++k) {
        const Eigen::VectorXd z = standard_normal(n_, rng_);
        out.push_back(mean_ + sigma_ * (basis_ * diag_.cwiseProduct(z)));
    }
    return out;
}

void Cmaes::tell(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& fitness) {
    if (static_cast<int>(candidates.size()) != lambda_ || fitness.size() != candidates.size())
        throw ConfigError("cmaes: tell() expects one fitness per asked candidate");
    ++generation_;
    const auto order = argsort(fitness);

    const Eigen::VectorXd old_mean = mean_;
    mean_.setZero();
    for (int i = 0; i < mu_; ++i) mean_ += weights_[i] * candidates[order[i]];
    const Eigen::VectorXd step = (mean_ - old_mean) / sigma_;

    // C^{-1/2} step
    const Eigen::VectorXd inv_sqrt_step = basis_ * (basis_.transpose() * step).cwiseQuotient(diag_);
    p_sigma_ = (1.0 - c_sigma_) * p_sigma_ + std::sqrt(c_sigma_ * (2.0 - c_sigma_) * mu_eff_) * inv_sqrt_step;
    const double ps_norm = p_sigma_.norm();
    const double gen_factor = 1.0 - std::pow(1.0 - c_sigma_, 2.0 * generation_);
    const bool h_sigma = ps_norm / std::sqrt(gen_factor) / chi_n_ < 1.4 + 2.0 / (n_ + 1.0);
    p_c_ = (1.0 - c_c_) * p_c_;
    if (h_sigma) p_c_ += std::sqrt(c_c_ * (2.0 - c_c_) * mu_eff_) * step;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n_, n_);
    for (int i = 0; i < mu_; ++i) {
        const Eigen::VectorXd y = (candidates[order[i]] - old_mean) / sigma_;
        rank_mu.noalias() += weights_[i] * y * y.transpose();
    }
    const double delta_h = h_sigma ? 0.0 : c_c_ * (2.0 - c_c_);
    cov_ = (1.0 - c_1_ - c_mu_) * cov_ + c_1_ * (p_c_ * p_c_.transpose() + delta_h * cov_) + c_mu_ * rank_mu;

    sigma_ *= std::exp((c_sigma_ / d_sigma_) * (ps_norm / chi_n_ - 1.0));
    if (!std::isfinite(sigma_) || sigma_ <= 0.0) sigma_ = 1e-300;
    decompose();
}

// ---------------------------------------------------------------------------

SeparableNes::SeparableNes(Eigen::VectorXd mean, Eigen::VectorXd sigmas, SnesOptions options)
    : mean_(std::move(mean)), sigmas_(std::move(sigmas)), rng_(options.seed) {
    const int n = static_cast<int>(mean_.size());
    if (n < 1 || sigmas_.size() != n) throw ConfigError("snes: mean and sigma must have equal, non-zero length");
    if ((sigmas_.array() <= 0.0).any()) throw ConfigError("snes: sigmas must be > 0");
    lambda_ = options.population > 0 ? options.population : default_population(n);
    if (lambda_ < 2) throw ConfigError("snes: population must be >= 2");
    lr_mean_ = options.lr_mean;
    lr_sigma_ = options.lr_sigma > 0.0 ? options.lr_sigma : (3.0 + std::log(static_cast<double>(n))) / (5.0 * std::sqrt(static_cast<double>(n)));

    utilities_.resize(lambda_);
    for (int k = 0; k < lambda_; ++k)
        utilities_[k] = std::max(0.0, std::log(lambda_ / 2.0 + 1.0) - std::log(k + 1.0));
    utilities_ = utilities_ / utilities_.sum() - Eigen::VectorXd::Constant(lambda_, 1.0 / lambda_);
}

std::vector<Eigen::VectorXd> SeparableNes::ask() {
    last_noise_.clear();
    std::vector<Eigen::VectorXd> out;
    const int n = static_cast<int>(mean_.size());
    for (int k = 0; k < lambda_; ++k) {
        last_noise_.push_back(standard_normal(n, rng_));
        out.push_back(mean_ + sigmas_.cwiseProduct(last_noise_.back()));
    }
    return out;
}

void SeparableNes::tell(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& fitness) {
    if (static_cast<int>(candidates.size()) != lambda_ || fitness.size() != candidates.size() ||
        last_noise_.size() != candidates.size())
        throw ConfigError("snes: tell() expects one fitness per asked candidate");
    const auto order = argsort(fitness);
    const int n = static_cast<int>(mean_.size());
    Eigen::VectorXd grad_mu = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd grad_sigma = Eigen::VectorXd::Zero(n);
    for (int rank = 0; rank < lambda_; ++rank) {
        const auto& s = last_noise_[order[rank]];
        grad_mu += utilities_[rank] * s;
        grad_sigma += utilities_[rank] * (s.array().square() - 1.0).matrix();
    }
    mean_ += lr_mean_ * sigmas_.cwiseProduct(grad_mu);
    sigmas_ = sigmas_.cwiseProduct((0.5 * lr_sigma_ * grad_sigma).array().exp().matrix());
}

// ---------------------------------------------------------------------------

MinimizeResult minimize(EvolutionStrategy& es, const std::function<double(const Eigen::VectorXd&)>& f,
                        int max_generations, double target) {
    MinimizeResult res;
    res.best_fitness = std::numeric_limits<double>::infinity();
    res.generations = 0;
    for (int g = 0; g < max_generations; ++g) {
        const auto cand = es.ask();
        std::vector<double> fit;
        fit.reserve(cand.size());
        for (const auto& x : cand) {
            fit.push_back(f(x));
            if (fit.back() < res.best_fitness) {
                res.best_fitness = fit.back();
                res.best = x;
            }
        }
        es.tell(cand, fit);
        res.trace.push_back(res.best_fitness);
        res.generations = g + 1;
        if (res.best_fitness <= target) break;
    }
    return res;
}

}  // namespace pineapple
