#pragma once

// Domain types shared by every stage of the pipeline: electrode parameters,
// cell constants, the four cycle-dependent scaling factors and the
// nondimensional (alpha, beta) form of a single-particle diffusion task.

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace pineapple {

enum class ElectrodeKind { Positive, Negative };

std::string_view to_string(ElectrodeKind kind);
ElectrodeKind electrode_kind_from_string(std::string_view name);

/// Volume fraction, area and thickness. When present they determine the
/// geometric coefficient G = R / (3 eps A L).
struct ElectrodeGeometry {
    double volume_fraction = 0.0;  // -
    double area = 0.0;             // m^2
    double thickness = 0.0;        // m
};

double geometric_coefficient(double radius, const ElectrodeGeometry& geometry);

struct ElectrodeParams {
    double diffusion = 0.0;              // D_k, m^2/s
    double radius = 0.0;                 // R_k, m
    double initial_concentration = 0.0;  // C_k, mol/m^3
    double max_concentration = 0.0;      // c_max,k, mol/m^3
    double geometric = 0.0;              // G_k, 1/m^2
    double exchange_current = 0.0;       // j_k, A/m^2
    std::optional<ElectrodeGeometry> geometry;

    /// Throws RangeError when a field is non-positive, C_k > c_max,k, or the
    /// stored G_k disagrees with the geometry by more than 1e-12 relative.
    void validate() const;
};

struct CellConstants {
    double current = 1.35;          // I, A (positive = discharge)
    double faraday = 96485.0;       // F, C/mol
    double temperature = 298.15;    // K
    double gas_constant = 8.3145;   // R_g, J/mol/K
    double film_resistance = 0.02;  // R_f, ohm
    double horizon = 3600.0;        // T, s

    void validate() const;
};

// ---------------------------------------------------------------------------
// Cycle-dependent scaling factors

enum class Factor : int { Dp = 0, Dn = 1, Gp = 2, CmaxP = 3 };
inline constexpr std::size_t kFactorCount = 4;

struct FactorSpec {
    Factor factor;
    std::string_view name;
    double lower;
    double upper;
    bool log_encoded;
};

inline constexpr std::array<FactorSpec, kFactorCount> kFactorSpecs{{
    {Factor::Dp, "eta_Dp", 1e-1, 1e1, true},
    {Factor::Dn, "eta_Dn", 1e-2, 1e1, true},
    {Factor::Gp, "eta_Gp", 1.0, 4.0, false},
    {Factor::CmaxP, "eta_cmaxp", 0.8, 1.2, false},
}};

const FactorSpec& factor_spec(Factor factor);

class ScalingFactors {
public:
    /// Identity factors (all ones).
    ScalingFactors();

    /// Bounded construction; throws RangeError outside the declared ranges.
    ScalingFactors(double eta_dp, double eta_dn, double eta_gp, double eta_cmaxp);

    /// Escape hatch for sensitivity studies: only positivity is enforced.
    static ScalingFactors unbounded(double eta_dp, double eta_dn, double eta_gp, double eta_cmaxp);
    static ScalingFactors from_array(const std::array<double, kFactorCount>& values, bool bounded = true);

    double eta_dp() const { return values_[0]; }
    double eta_dn() const { return values_[1]; }
    double eta_gp() const { return values_[2]; }
    double eta_cmaxp() const { return values_[3]; }
    double operator[](Factor f) const { return values_[static_cast<int>(f)]; }
    const std::array<double, kFactorCount>& values() const { return values_; }
    bool bounded() const { return bounded_; }

    /// Copy with one factor replaced; the result is unbounded when the
    /// replacement leaves the declared range and `allow_escape` is set.
    ScalingFactors with(Factor f, double value, bool allow_escape = false) const;

    friend bool operator==(const ScalingFactors&, const ScalingFactors&) = default;

private:
    ScalingFactors(std::array<double, kFactorCount> values, bool bounded);
    std::array<double, kFactorCount> values_;
    bool bounded_ = true;
};

// ---------------------------------------------------------------------------
// Reference table and fixed factors

/// Multipliers applied once at configuration load.
struct ElectrodeFactors {
    double diffusion = 1.0;
    double radius = 1.0;
    double initial_concentration = 1.0;
    double max_concentration = 1.0;
    double geometric = 1.0;
    double exchange_current = 1.0;
};

/// How a multiplier on G_k is realized.
enum class GeometricScaling {
    Direct,          // G_k multiplied, geometry dropped
    VolumeFraction,  // eps_k divided, G_k re-derived from geometry
};

struct CellParameters {
    ElectrodeParams positive;
    ElectrodeParams negative;
    CellConstants constants;

    const ElectrodeParams& electrode(ElectrodeKind kind) const {
        return kind == ElectrodeKind::Positive ? positive : negative;
    }
};

struct ModelConfig {
    /// Reference values. `geometric` is derived from geometry when geometry
    /// is present; a non-zero value is then cross-checked.
    ElectrodeParams positive_reference;
    ElectrodeParams negative_reference;
    ElectrodeFactors positive_fixed;
    ElectrodeFactors negative_fixed;
    double film_resistance_fixed = 1.0;
    CellConstants constants;
    GeometricScaling geometric_scaling = GeometricScaling::Direct;

    /// LCO/graphite reference values and fixed factors for the CX2 cell.
    static ModelConfig defaults();

    /// Missing keys fall back to `defaults()`. Throws ConfigError.
    static ModelConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// Reference values with the fixed factors applied.
    CellParameters baseline() const;
};

/// Multiply one electrode's parameters; G_k is handled per `mode`.
ElectrodeParams scale_electrode(const ElectrodeParams& params, const ElectrodeFactors& factors,
                                GeometricScaling mode);

/// Effective parameters for one cycle: eta_Dp, eta_Gp, eta_cmaxp act on the
/// positive electrode, eta_Dn on the negative one. Everything else passes
/// through unchanged.
CellParameters apply_scaling(const CellParameters& baseline, const ScalingFactors& factors,
                             GeometricScaling mode = GeometricScaling::Direct);
CellParameters apply_scaling(const ModelConfig& config, const ScalingFactors& factors);

// ---------------------------------------------------------------------------
// Nondimensional task

struct Nondimensional {
    double alpha = 0.0;
    double beta = 0.0;
};

/// alpha = D T / R^2, beta = J R / (D C). Throws SingularParameterError for
/// D = 0 and RangeError for non-positive R, C or T.
Nondimensional nondimensionalize(double diffusion, double radius, double initial_concentration,
                                 double surface_flux, double horizon);

/// J_p = +(I/F) G_p, J_n = -(I/F) G_n.
double electrode_surface_flux(ElectrodeKind kind, double geometric, const CellConstants& constants);

struct ElectrodeTask {
    ElectrodeKind kind = ElectrodeKind::Positive;
    ElectrodeParams params;
    double surface_flux = 0.0;  // mol/m^2/s
    double alpha = 0.0;
    double beta = 0.0;

    static ElectrodeTask make(ElectrodeKind kind, const ElectrodeParams& params,
                              const CellConstants& constants);
    Nondimensional nondimensional() const { return {alpha, beta}; }
};

struct TaskPair {
    ElectrodeTask positive;
    ElectrodeTask negative;
};

/// Builds both electrode tasks and checks the discharge sign convention.
TaskPair make_task_pair(const CellParameters& params);

nlohmann::json to_json(const ElectrodeParams& p);
ElectrodeParams electrode_params_from_json(const nlohmann::json& j, const ElectrodeParams& fallback);
nlohmann::json to_json(const ScalingFactors& f);
ScalingFactors scaling_factors_from_json(const nlohmann::json& j);

}  // namespace pineapple
