#pragma once

// Baldwinian meta-training: an outer evolution strategy searches the
// distribution the hidden-layer weights are drawn from (plus the
// least-squares weights lambda); every candidate is scored after the
// closed-form fine-tune on a subset of labelled tasks.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pineapple/core_model.hpp"
#include "pineapple/lepinn.hpp"
#include "pineapple/reference_solver.hpp"

namespace pineapple {

// ---------------------------------------------------------------------------
// Task population

struct TaskRanges {
    double dp_lower = 3.9e-15;  // D_p, log-uniform
    double dp_upper = 3.9e-13;
    double gp_lower = 1.01;  // G_p, uniform
    double gp_upper = 4.03;
    double dn_lower = 3.9e-16;  // D_n, log-uniform
    double dn_upper = 3.9e-13;

    void validate() const;
};

struct TaskCounts {
    int train_positive = 60;
    int train_negative = 40;
    int test_positive = 40;
    int test_negative = 10;

    void validate() const;
};

struct MetaTask {
    int id = 0;
    ElectrodeKind kind = ElectrodeKind::Positive;
    double diffusion = 0.0;  // m^2/s
    double geometric = 0.0;  // G_k
    Nondimensional task;
    ConcentrationField label;  // 61 x 64
};

struct TaskSet {
    std::uint64_t seed = 0;
    TaskRanges ranges;
    std::vector<MetaTask> train;
    std::vector<MetaTask> test;

    /// Metadata only; labels are written separately.
    nlohmann::json to_json() const;
    /// Writes the tasks.json index plus tasks/<split>_<id>.json and
    /// labels/<split>_<id>.csv for every task under `dir`.
    void save(const std::string& dir) const;
    static TaskSet load(const std::string& dir);
};

/// Positive tasks vary D_p and G_p, negative tasks vary D_n; all other
/// parameters come from `config.baseline()`. Deterministic given `seed` and
/// independent of `jobs`.
TaskSet sample_tasks(const ModelConfig& config, const TaskRanges& ranges, const TaskCounts& counts,
                     std::uint64_t seed, int jobs = 1);

/// One labelled task at a chosen diffusion coefficient; geometric <= 0 keeps
/// the baseline G_k. Ranges are not enforced.
MetaTask make_task(const ModelConfig& config, ElectrodeKind kind, double diffusion, double geometric = 0.0,
                   int id = 0);

/// Raw draws used by sample_tasks, exposed for distribution checks.
std::vector<double> sample_log_uniform(double lower, double upper, int count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Genome

inline constexpr int kActivationBlocks = 3;

/// Gaussian distribution of one activation block's input weights and biases.
struct BlockDistribution {
    double mean_r = 0.0;
    double log_spread_r = 0.0;
    double mean_t = 0.0;
    double log_spread_t = 0.0;
    double mean_bias = 0.0;
    double log_spread_bias = 0.0;

    double spread_r() const;
    double spread_t() const;
    double spread_bias() const;
};

/// log10 bounds applied when decoding the lambda genes.
struct LambdaBounds {
    std::array<double, 4> lower{-12.0, -2.0, -2.0, -2.0};  // pi, pde, ic, bc
    std::array<double, 4> upper{0.0, 3.0, 3.0, 3.0};
};

struct DistributionGenome {
    std::array<BlockDistribution, kActivationBlocks> blocks;  // sin, silu, tanh
    std::array<double, 4> log10_lambda{-6.0, 0.0, 1.0, 1.0};  // pi, pde, ic, bc
    std::uint64_t seed = 0;                                   // materialization seed

    static constexpr int kDimension = kActivationBlocks * 6 + 4;

    LearningHyper hyper() const;
    Eigen::VectorXd encode() const;
    /// Lambda genes are clamped into `bounds`.
    static DistributionGenome decode(const Eigen::VectorXd& x, std::uint64_t seed, const LambdaBounds& bounds = {});
    static DistributionGenome initial(std::uint64_t seed);

    nlohmann::json to_json() const;
    static DistributionGenome from_json(const nlohmann::json& j);
};

/// Block sizes for a given width: n_h / 3 each, remainder to the first blocks.
std::array<int, kActivationBlocks> block_sizes(int hidden_width);

/// Draws the hidden layer. The standard-normal variates depend only on
/// (seed, hidden_width), so the map genome -> weights is deterministic.
FeatureBasis materialize(const DistributionGenome& genome, int hidden_width, BasisProvenance provenance = {});

// ---------------------------------------------------------------------------
// Fitness

inline constexpr double kConditioningPenalty = 1e6;

struct FitnessWeights {
    double lse = 0.1;
    double mse = 1.0;
};

struct TaskFitness {
    int task_id = 0;
    double lse = 0.0;
    double mse = 0.0;  // sum of squared label errors over the label grid
    double penalty = 0.0;
};

struct FitnessRecord {
    int genome_id = 0;
    int generation = 0;
    double loss = 0.0;
    std::vector<TaskFitness> tasks;

    /// sum(w.lse * lse + w.mse * mse + penalty) over tasks.
    double recompute(const FitnessWeights& w = {}) const;
};

/// Label-grid points in row-major (time, radius) order, matching
/// ConcentrationField::values.
std::vector<Point> label_points(int n_t = 61, int n_r = 64);

struct EvaluationSetup {
    int hidden_width = 256;
    CollocationSet colloc = CollocationSet::tensor();
    FitnessWeights weights;
};

FitnessRecord evaluate_genome(const DistributionGenome& genome, const std::vector<const MetaTask*>& subset,
                              const EvaluationSetup& setup);

/// Relative L2 error of the fine-tuned basis against each task's label.
std::vector<double> held_out_errors(std::shared_ptr<const FeatureBasis> basis, const std::vector<MetaTask>& tasks,
                                    const CollocationSet& colloc);

// ---------------------------------------------------------------------------
// Outer loop

struct MetaTrainConfig {
    int population = 32;
    int generations = 300;
    int subset_size = 16;
    int hidden_width = 256;
    std::uint64_t seed = 1;
    std::string es = "diag-nes";  // or "cmaes"
    int patience = 100;
    int jobs = 1;
    int colloc_n_t = 61;
    int colloc_n_r = 64;
    LambdaBounds lambda_bounds;

    void validate() const;
    static MetaTrainConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct GenerationStats {
    int generation = 0;
    double best = 0.0;  // best so far
    double mean = 0.0;  // this generation, penalties included
    double median = 0.0;
    int penalized = 0;  // candidates with any conditioning penalty
};

struct MetaTrainResult {
    FeatureBasis basis;
    DistributionGenome best_genome;
    double best_fitness = 0.0;
    std::vector<GenerationStats> history;
    std::vector<std::vector<int>> subsets;  // training-task indices per generation
    std::string status = "ok";              // "ok" or "stalled"
};

using GenerationCallback = std::function<void(const GenerationStats&)>;

MetaTrainResult run_meta_training(const MetaTrainConfig& config, const std::vector<MetaTask>& train,
                                  const std::string& run_id = {}, const GenerationCallback& on_generation = {});

/// Subset drawn for a generation, without replacement.
std::vector<int> generation_subset(std::uint64_t seed, int generation, int n_train, int subset_size);

void write_fitness_history_csv(const std::string& path, const std::vector<GenerationStats>& history);

}  // namespace pineapple
