#pragma once

// Terminal voltage of the single-particle cell and synthesis of constant
// current discharge curves from electrode surface concentrations.

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pineapple/core_model.hpp"
#include "pineapple/lepinn.hpp"
#include "pineapple/reference_solver.hpp"

namespace pineapple {

inline constexpr double kStoichiometryClamp = 1e-4;
inline constexpr double kCutoffVoltage = 2.7;
/// Fraction of clamped samples above which a synthesis is flagged.
inline constexpr double kImplausibleClampFraction = 0.2;

// ---------------------------------------------------------------------------
// Equilibrium potentials

struct CurveTerm {
    enum class Type { Const, Tanh, Exp, Power };
    Type type = Type::Const;
    // const: [c]; tanh: [amp, slope, offset] -> amp tanh(slope x + offset);
    // exp: [amp, slope, offset] -> amp exp(slope x + offset); power: [amp, p] -> amp x^p
    std::vector<double> coeffs;

    double operator()(double x) const;
};

class EquilibriumPotentialCurve {
public:
    enum class Kind { Terms, Table };

    static EquilibriumPotentialCurve from_terms(std::string id, std::vector<CurveTerm> terms, double lower,
                                                double upper, std::string source = {});
    /// Monotone piecewise-cubic (Fritsch-Carlson) interpolation through the
    /// samples; x must be strictly increasing.
    static EquilibriumPotentialCurve from_table(std::string id, std::vector<double> x, std::vector<double> u,
                                                std::string source = {});

    /// Throws CurveDomainError outside the domain or for a non-finite value.
    double operator()(double x) const;

    const std::string& id() const { return id_; }
    Kind kind() const { return kind_; }
    double lower() const { return lower_; }
    double upper() const { return upper_; }
    const std::string& source() const { return source_; }

    /// Table representation sampled at n uniform points over [lo, hi].
    EquilibriumPotentialCurve tabulated(int n, double lo, double hi) const;
    /// Strictly decreasing at n uniform samples over [lo, hi].
    bool decreasing_on(double lo, double hi, int n = 1000) const;

    nlohmann::json to_json() const;
    static EquilibriumPotentialCurve from_json(const nlohmann::json& j);
    static EquilibriumPotentialCurve load(const std::string& path);

private:
    std::string id_;
    Kind kind_ = Kind::Terms;
    double lower_ = 0.0, upper_ = 1.0;
    std::string source_;
    std::vector<CurveTerm> terms_;
    std::vector<double> x_, u_, slope_;
};

struct OcpPair {
    EquilibriumPotentialCurve positive;
    EquilibriumPotentialCurve negative;

    /// lco.json and graphite.json from `dir`.
    static OcpPair load(const std::string& dir);
    static OcpPair defaults();
};

/// PINEAPPLE_DATA_DIR if set, otherwise the data directory of the source tree.
std::string default_data_dir();

// ---------------------------------------------------------------------------
// Voltage

struct VoltagePoint {
    double t = 0.0;            // s
    double ocv = 0.0;          // V
    double overvoltage = 0.0;  // V, subtracted from ocv
    double v = 0.0;            // V
    double y_p = 0.0;          // after clamping
    double x_n = 0.0;
    bool clamped = false;
};

/// Kinetic and film losses at the cell's constant current.
double overvoltage(const CellParameters& params);

VoltagePoint terminal_voltage(double y_p, double x_n, const CellParameters& params, const OcpPair& ocp);

struct DischargeCurve {
    std::string battery_id;
    int cycle = 0;
    std::vector<double> t;  // s
    std::vector<double> v;  // V
    double current = 1.35;  // A
    double cutoff = kCutoffVoltage;

    std::size_t size() const { return t.size(); }
    double duration() const { return t.empty() ? 0.0 : t.back(); }
    /// Strictly increasing t, V within [2.0, 4.5], last sample >= cutoff.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Surface concentration sources

/// Surface concentration at a fixed set of normalized times.
class BoundSurface {
public:
    virtual ~BoundSurface() = default;
    virtual Eigen::VectorXd operator()(const Nondimensional& task) const = 0;
};

class SurfaceModel {
public:
    virtual ~SurfaceModel() = default;
    virtual std::unique_ptr<BoundSurface> bind(const Eigen::VectorXd& t_hat) const = 0;
    virtual std::string name() const = 0;
};

/// Fine-tuned surrogate evaluated at exactly the requested times.
class SurrogateSurface final : public SurfaceModel {
public:
    SurrogateSurface(std::shared_ptr<const FeatureBasis> basis, const CollocationSet& colloc = CollocationSet::tensor());
    explicit SurrogateSurface(std::shared_ptr<const PreparedSystem> prepared);

    std::unique_ptr<BoundSurface> bind(const Eigen::VectorXd& t_hat) const override;
    std::string name() const override { return "surrogate"; }
    const PreparedSystem& prepared() const { return *prepared_; }

private:
    std::shared_ptr<const PreparedSystem> prepared_;
};

/// Reference solver on a fine time grid, linearly interpolated in time.
class ReferenceSurface final : public SurfaceModel {
public:
    explicit ReferenceSurface(int n_r = 256, int n_t = 1441, int substeps = 1);

    std::unique_ptr<BoundSurface> bind(const Eigen::VectorXd& t_hat) const override;
    std::string name() const override { return "reference"; }

private:
    SolverGrid grid_;
};

// ---------------------------------------------------------------------------
// Synthesis

struct SynthesisResult {
    std::vector<VoltagePoint> points;  // every requested time
    DischargeCurve curve;              // possibly truncated at the cutoff
    int clamped = 0;                   // among the samples kept in `curve`
    bool implausible = false;          // more than 20% of kept samples clamped, or none kept

    double clamped_fraction() const { return curve.size() == 0 ? 1.0 : static_cast<double>(clamped) / curve.size(); }
    std::string status() const { return implausible ? "implausible-parameters" : "ok"; }
};

/// Evaluates discharge curves at one fixed time vector; reusable across
/// factor sets and safe to call concurrently.
class VoltageSynthesizer {
public:
    VoltageSynthesizer(ModelConfig config, OcpPair ocp, const SurfaceModel& surface, std::vector<double> times);

    SynthesisResult operator()(const ScalingFactors& factors, bool truncate = false) const;

    const std::vector<double>& times() const { return times_; }
    const ModelConfig& config() const { return config_; }

private:
    ModelConfig config_;
    CellParameters baseline_;
    OcpPair ocp_;
    std::vector<double> times_;
    std::unique_ptr<BoundSurface> surface_;
};

/// Throws DomainError for times outside [0, T].
SynthesisResult synthesize_vt(const ScalingFactors& factors, const ModelConfig& config, const OcpPair& ocp,
                              const SurfaceModel& surface, const std::vector<double>& times, bool truncate = true);

/// n uniform times over [0, T].
std::vector<double> uniform_times(int n, double horizon = 3600.0);

}  // namespace pineapple
