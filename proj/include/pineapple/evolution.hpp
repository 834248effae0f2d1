#pragma once

// Ask/tell evolution strategies: full-covariance CMA-ES (rank-one plus
// rank-mu update) and the separable natural evolution strategy (SNES).
// Both minimize.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pineapple {

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

class EvolutionStrategy {
public:
    virtual ~EvolutionStrategy() = default;

    virtual std::vector<Eigen::VectorXd> ask() = 0;
    /// Fitness values in the order returned by the preceding ask().
    virtual void tell(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& fitness) = 0;

    virtual Eigen::VectorXd mean() const = 0;
    /// Largest standard deviation along any search direction.
    virtual double max_step() const = 0;
    virtual int population() const = 0;
    virtual std::string name() const = 0;
};

struct CmaesOptions {
    int population = 0;  // 0 -> 4 + floor(3 ln n)
    std::uint64_t seed = 1;
};

class Cmaes final : public EvolutionStrategy {
public:
    Cmaes(Eigen::VectorXd mean, double sigma, CmaesOptions options = {});
    /// Per-coordinate initial standard deviations (diagonal C0).
    Cmaes(Eigen::VectorXd mean, const Eigen::VectorXd& sigmas, CmaesOptions options = {});

    std::vector<Eigen::VectorXd> ask() override;
    void tell(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& fitness) override;

    Eigen::VectorXd mean() const override { return mean_; }
    double max_step() const override;
    int population() const override { return lambda_; }
    std::string name() const override { return "cmaes"; }

    double sigma() const { return sigma_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }

private:
    void init(const Eigen::VectorXd& diag_scale);
    void decompose();

    int n_;
    int lambda_;
    int mu_;
    Eigen::VectorXd weights_;
    double mu_eff_, c_sigma_, d_sigma_, c_c_, c_1_, c_mu_, chi_n_;
    Eigen::VectorXd mean_;
    double sigma_;
    Eigen::MatrixXd cov_, basis_;  // C = B D^2 B^T
    Eigen::VectorXd diag_;         // D
    Eigen::VectorXd p_sigma_, p_c_;
    int generation_ = 0;
    std::mt19937_64 rng_;
};

struct SnesOptions {
    int population = 0;  // 0 -> 4 + floor(3 ln n)
    std::uint64_t seed = 1;
    double lr_mean = 1.0;
    double lr_sigma = 0.0;  // 0 -> (3 + ln n) / (5 sqrt n)
};

/// Diagonal natural evolution strategy with rank-based fitness shaping.
class SeparableNes final : public EvolutionStrategy {
public:
    SeparableNes(Eigen::VectorXd mean, Eigen::VectorXd sigmas, SnesOptions options = {});

    std::vector<Eigen::VectorXd> ask() override;
    void tell(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& fitness) override;

    Eigen::VectorXd mean() const override { return mean_; }
    double max_step() const override { return sigmas_.maxCoeff(); }
    int population() const override { return lambda_; }
    std::string name() const override { return "diag-nes"; }

    const Eigen::VectorXd& sigmas() const { return sigmas_; }

private:
    int lambda_;
    Eigen::VectorXd mean_, sigmas_;
    Eigen::VectorXd utilities_;
    double lr_mean_, lr_sigma_;
    std::vector<Eigen::VectorXd> last_noise_;
    std::mt19937_64 rng_;
};

/// Indices that sort `values` ascending; ties broken by index.
std::vector<int> argsort(const std::vector<double>& values);

struct MinimizeResult {
    Eigen::VectorXd best;
    double best_fitness;
    std::vector<double> trace;  // best-so-far per generation
    int generations;
};

/// Plain driver used for sanity checks: stops after `max_generations` or once
/// the best fitness reaches `target`.
MinimizeResult minimize(EvolutionStrategy& es, const std::function<double(const Eigen::VectorXd&)>& f,
                        int max_generations, double target = -std::numeric_limits<double>::infinity());

}  // namespace pineapple
