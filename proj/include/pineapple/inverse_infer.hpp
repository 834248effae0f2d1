#pragma once

// Inverse inference of the cycle-dependent scaling factors from measured
// discharge curves: CMA-ES restarts, lowest-MSE-half filtering, rank
// correlation diagnostics and one-at-a-time sensitivity scans.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pineapple/core_model.hpp"
#include "pineapple/voltage_model.hpp"

namespace pineapple {

inline constexpr int kMinObservedSamples = 10;
/// Weight of the squared clamped-sample fraction added to the objective, V^2.
inline constexpr double kClampPenaltyWeight = 10.0;
/// Weight of the squared distance outside the unit box, used only to rank
/// CMA-ES candidates.
inline constexpr double kBoundaryPenaltyWeight = 1.0;

// ---------------------------------------------------------------------------

struct FactorBound {
    Factor factor;
    double lower;
    double upper;
    bool log_encoded;
};

/// Maps scaling factors to the unit box: log10 for the diffusion factors,
/// linear for the others.
class SearchSpace {
public:
    explicit SearchSpace(std::vector<FactorBound> bounds);
    static SearchSpace defaults();

    int dimension() const { return static_cast<int>(bounds_.size()); }
    const std::vector<FactorBound>& bounds() const { return bounds_; }

    Eigen::VectorXd encode(const ScalingFactors& f) const;
    /// Clamps u into [0,1]^d before decoding; free factors keep `fixed`.
    ScalingFactors decode(const Eigen::VectorXd& u, const ScalingFactors& fixed = {}) const;
    /// Squared Euclidean distance from u to the unit box.
    static double outside_distance_sq(const Eigen::VectorXd& u);

private:
    std::vector<FactorBound> bounds_;
};

// ---------------------------------------------------------------------------

/// Drops samples after T, then decimates by uniform stride to at most
/// `max_samples`. Throws EmptyCurveError with fewer than 10 usable samples.
DischargeCurve prepare_observed(const DischargeCurve& observed, double horizon = 3600.0, int max_samples = 600);

struct ObjectiveValue {
    double mse = 0.0;      // mean squared voltage error, V^2
    double penalty = 0.0;  // 10 * (clamped fraction)^2
    int clamped = 0;

    double total() const { return mse + penalty; }
};

/// Squared-distance objective against one observed curve. Bound to the
/// observed time points, so it can be evaluated concurrently.
class InverseObjective {
public:
    InverseObjective(const ModelConfig& config, const OcpPair& ocp, const SurfaceModel& surface,
                     DischargeCurve observed);

    ObjectiveValue operator()(const ScalingFactors& factors) const;
    const DischargeCurve& observed() const { return observed_; }
    const VoltageSynthesizer& synthesizer() const { return synth_; }

private:
    DischargeCurve observed_;
    VoltageSynthesizer synth_;
};

// ---------------------------------------------------------------------------

struct InverseProtocol {
    int restarts = 20;
    int generations = 50;
    int population = 20;
    std::uint64_t seed = 1;
    double initial_step = 0.3;  // fraction of the encoded box width
    int max_samples = 600;
    int jobs = 1;

    void validate() const;
    nlohmann::json to_json() const;
};

struct InferenceRun {
    int restart = 0;
    std::uint64_t seed = 0;
    ScalingFactors factors;
    double mse = 0.0;  // objective value including the clamping term
    std::vector<double> trace;  // best-so-far per generation
    std::string status;         // converged | stalled | penalized
    int evaluations = 0;

    nlohmann::json to_json() const;
};

struct FactorSummary {
    double min = 0.0, median = 0.0, max = 0.0;
};

struct CycleInference {
    std::string battery_id;
    int cycle = 0;
    std::vector<InferenceRun> runs;
    std::vector<int> filtered;  // indices into runs, ascending mse
    std::array<FactorSummary, kFactorCount> summary{};
    FactorSummary mse_summary;
    double capacity_ah = 0.0;
    std::string status = "ok";  // ok | all-penalized | failed

    std::vector<const InferenceRun*> filtered_runs() const;
    nlohmann::json to_json() const;
};

InferenceRun run_cmaes(const InverseObjective& objective, const SearchSpace& space, const InverseProtocol& protocol,
                       int restart, std::uint64_t seed);

/// Stable lowest-MSE half, |filtered| = ceil(n / 2).
std::vector<int> filter_lowest_half(const std::vector<InferenceRun>& runs);

CycleInference summarize_cycle(std::string battery_id, int cycle, std::vector<InferenceRun> runs, double capacity_ah);

/// Restart seeds derive from (seed, cycle, restart).
CycleInference infer_cycle(const InverseObjective& objective, const SearchSpace& space, const InverseProtocol& protocol,
                           int cycle = 0);

// ---------------------------------------------------------------------------

/// Spearman rank correlation with average ranks for ties; nullopt when
/// either vector is constant.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

/// RMS over factors of (inferred - true) / (upper - lower).
double normalized_inference_error(const ScalingFactors& inferred, const ScalingFactors& truth, const SearchSpace& space);

struct CorrelationRow {
    double threshold = 0.0;  // percent
    int count = 0;
    std::optional<double> rho;
};

/// Rows for thresholds {100, 75, 50, 25}; needs >= 20 runs.
std::vector<CorrelationRow> correlation_diagnostics(const std::vector<InferenceRun>& runs, const ScalingFactors& truth,
                                                    const SearchSpace& space);

// ---------------------------------------------------------------------------

struct SensitivityCurve {
    Factor factor;
    double relative_change = 0.0;
    ScalingFactors factors;
    DischargeCurve curve;
    double max_deviation = 0.0;  // V, over the common prefix with the reference curve
};

struct SensitivityResult {
    ScalingFactors reference;
    DischargeCurve reference_curve;
    std::vector<SensitivityCurve> curves;

    /// max over perturbations of max_deviation for one factor.
    double max_deviation(Factor f) const;
};

/// One-at-a-time relative perturbations (e.g. {-0.1, 0.1}) of each factor;
/// factors may leave their declared ranges.
SensitivityResult sensitivity_scan(const ScalingFactors& reference, const std::vector<double>& relative_changes,
                                   const VoltageSynthesizer& synth, const std::vector<Factor>& factors = {});

// ---------------------------------------------------------------------------

struct BatteryInference {
    std::string battery_id;
    std::string basis_id;
    InverseProtocol protocol;
    std::vector<CycleInference> cycles;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
    /// battery,cycle,factor,min,median,max,mse_median,capacity_Ah
    void write_csv(const std::string& path) const;
};

/// Independent inference for every curve; restarts of all cycles share the
/// worker pool. Per-cycle failures are recorded and the series continues.
BatteryInference infer_battery(const std::vector<DischargeCurve>& curves, const ModelConfig& config, const OcpPair& ocp,
                               const SurfaceModel& surface, const InverseProtocol& protocol,
                               const SearchSpace& space = SearchSpace::defaults(), std::string basis_id = {});

}  // namespace pineapple
