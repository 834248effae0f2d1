#include "pineapple/core_model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "pineapple/errors.hpp"

namespace pineapple {

namespace {

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

void require_positive(double x, const char* what) {
    if (!positive_finite(x)) {
        std::ostringstream os;
        os << what << " must be positive and finite, got " << x;
        throw RangeError(os.str());
    }
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::abs(a); }

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown configuration key '" + where + "." + key + "'");
    }
}

double number_or(const nlohmann::json& j, const char* key, double fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ConfigError("configuration key '" + where + "." + key + "' must be a number");
    return v.get<double>();
}

ElectrodeFactors factors_from_json(const nlohmann::json& j, const ElectrodeFactors& fallback, const std::string& where) {
    check_keys(j, {"diffusion", "radius", "initial_concentration", "max_concentration", "geometric", "exchange_current"},
               where);
    ElectrodeFactors f;
    f.diffusion = number_or(j, "diffusion", fallback.diffusion, where);
    f.radius = number_or(j, "radius", fallback.radius, where);
    f.initial_concentration = number_or(j, "initial_concentration", fallback.initial_concentration, where);
    f.max_concentration = number_or(j, "max_concentration", fallback.max_concentration, where);
    f.geometric = number_or(j, "geometric", fallback.geometric, where);
    f.exchange_current = number_or(j, "exchange_current", fallback.exchange_current, where);
    for (double v : {f.diffusion, f.radius, f.initial_concentration, f.max_concentration, f.geometric,
                     f.exchange_current}) {
        if (!positive_finite(v)) throw ConfigError(where + ": fixed factors must be positive");
    }
    return f;
}

nlohmann::json factors_to_json(const ElectrodeFactors& f) {
    return {{"diffusion", f.diffusion},
            {"radius", f.radius},
            {"initial_concentration", f.initial_concentration},
            {"max_concentration", f.max_concentration},
            {"geometric", f.geometric},
            {"exchange_current", f.exchange_current}};
}

}  // namespace

std::string_view to_string(ElectrodeKind kind) {
    return kind == ElectrodeKind::Positive ? "positive" : "negative";
}

ElectrodeKind electrode_kind_from_string(std::string_view name) {
    if (name == "positive" || name == "p") return ElectrodeKind::Positive;
    if (name == "negative" || name == "n") return ElectrodeKind::Negative;
    throw ConfigError("unknown electrode kind '" + std::string(name) + "'");
}

double geometric_coefficient(double radius, const ElectrodeGeometry& g) {
    require_positive(radius, "particle radius");
    require_positive(g.volume_fraction, "volume fraction");
    require_positive(g.area, "electrode area");
    require_positive(g.thickness, "electrode thickness");
    return radius / (3.0 * g.volume_fraction * g.area * g.thickness);
}

void ElectrodeParams::validate() const {
    require_positive(diffusion, "diffusion coefficient");
    require_positive(radius, "particle radius");
    require_positive(initial_concentration, "initial concentration");
    require_positive(max_concentration, "maximum concentration");
    require_positive(geometric, "geometric coefficient");
    require_positive(exchange_current, "exchange current density");
    if (initial_concentration > max_concentration) {
        std::ostringstream os;
        os << "initial concentration " << initial_concentration << " exceeds maximum " << max_concentration;
        throw RangeError(os.str());
    }
    if (geometry) {
        const double derived = geometric_coefficient(radius, *geometry);
        if (relative_gap(geometric, derived) > 1e-12) {
            std::ostringstream os;
            os << "geometric coefficient " << geometric << " inconsistent with R/(3 eps A L) = " << derived;
            throw RangeError(os.str());
        }
    }
}

void CellConstants::validate() const {
    if (!(std::isfinite(current) && current >= 0.0)) throw RangeError("applied current must be non-negative");
    require_positive(faraday, "Faraday constant");
    require_positive(temperature, "temperature");
    require_positive(gas_constant, "gas constant");
    if (!(std::isfinite(film_resistance) && film_resistance >= 0.0))
        throw RangeError("film resistance must be non-negative");
    require_positive(horizon, "horizon");
}

// ---------------------------------------------------------------------------

const FactorSpec& factor_spec(Factor factor) { return kFactorSpecs[static_cast<int>(factor)]; }

ScalingFactors::ScalingFactors() : values_{1.0, 1.0, 1.0, 1.0}, bounded_(true) {}

ScalingFactors::ScalingFactors(std::array<double, kFactorCount> values, bool bounded)
    : values_(values), bounded_(bounded) {
    for (std::size_t i = 0; i < kFactorCount; ++i) {
        const auto& spec = kFactorSpecs[i];
        if (!positive_finite(values_[i])) {
            throw RangeError(std::string(spec.name) + " must be positive and finite");
        }
        if (bounded_ && (values_[i] < spec.lower || values_[i] > spec.upper)) {
            std::ostringstream os;
            os << spec.name << " = " << values_[i] << " outside [" << spec.lower << ", " << spec.upper << "]";
            throw RangeError(os.str());
        }
    }
}

ScalingFactors::ScalingFactors(double eta_dp, double eta_dn, double eta_gp, double eta_cmaxp)
    : ScalingFactors(std::array<double, kFactorCount>{eta_dp, eta_dn, eta_gp, eta_cmaxp}, true) {}

ScalingFactors ScalingFactors::unbounded(double eta_dp, double eta_dn, double eta_gp, double eta_cmaxp) {
    return ScalingFactors({eta_dp, eta_dn, eta_gp, eta_cmaxp}, false);
}

ScalingFactors ScalingFactors::from_array(const std::array<double, kFactorCount>& values, bool bounded) {
    return ScalingFactors(values, bounded);
}

ScalingFactors ScalingFactors::with(Factor f, double value, bool allow_escape) const {
    auto values = values_;
    values[static_cast<int>(f)] = value;
    const auto& spec = factor_spec(f);
    const bool inside = value >= spec.lower && value <= spec.upper;
    if (!inside && !allow_escape && bounded_) return ScalingFactors(values, true);  // throws
    return ScalingFactors(values, bounded_ && inside);
}

// ---------------------------------------------------------------------------

ModelConfig ModelConfig::defaults() {
    ModelConfig c;

    // LCO cathode
    c.positive_reference.diffusion = 3.9e-14;
    c.positive_reference.radius = 3.0e-6;
    c.positive_reference.initial_concentration = 30730.0;
    c.positive_reference.max_concentration = 51000.0;
    c.positive_reference.exchange_current = 1.0e-1;
    c.positive_reference.geometry = ElectrodeGeometry{0.689, 0.1, 7.2e-5};
    c.positive_reference.geometric =
        geometric_coefficient(c.positive_reference.radius, *c.positive_reference.geometry);
    c.positive_fixed.initial_concentration = 0.82;
    c.positive_fixed.radius = 5.0;
    c.positive_fixed.exchange_current = 2.5;

    // Graphite anode
    c.negative_reference.diffusion = 3.9e-14;
    c.negative_reference.radius = 5.86e-6;
    c.negative_reference.initial_concentration = 29866.0;
    c.negative_reference.max_concentration = 30555.0;
    c.negative_reference.exchange_current = 7.7e-2;
    c.negative_reference.geometry = ElectrodeGeometry{0.75, 0.1, 8.3e-5};
    c.negative_reference.geometric =
        geometric_coefficient(c.negative_reference.radius, *c.negative_reference.geometry);
    c.negative_fixed.geometric = 2.8;
    c.negative_fixed.radius = 2.0;
    c.negative_fixed.exchange_current = 3.2;

    c.constants = CellConstants{};
    c.film_resistance_fixed = 0.5;
    return c;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c = defaults();
    if (j.is_null()) return c;
    check_keys(j, {"positive", "negative", "constants", "film_resistance_fixed", "geometric_scaling"}, "model");

    auto load_electrode = [](const nlohmann::json& e, ElectrodeParams& ref, ElectrodeFactors& fixed,
                             const std::string& where) {
        check_keys(e,
                   {"diffusion", "radius", "initial_concentration", "max_concentration", "geometric",
                    "exchange_current", "geometry", "fixed_factors"},
                   where);
        ref = electrode_params_from_json(e, ref);
        if (e.contains("fixed_factors")) fixed = factors_from_json(e.at("fixed_factors"), fixed, where + ".fixed_factors");
    };
    if (j.contains("positive")) load_electrode(j.at("positive"), c.positive_reference, c.positive_fixed, "model.positive");
    if (j.contains("negative")) load_electrode(j.at("negative"), c.negative_reference, c.negative_fixed, "model.negative");

    if (j.contains("constants")) {
        const auto& k = j.at("constants");
        const std::string where = "model.constants";
        check_keys(k, {"current", "faraday", "temperature", "gas_constant", "film_resistance", "horizon"}, where);
        c.constants.current = number_or(k, "current", c.constants.current, where);
        c.constants.faraday = number_or(k, "faraday", c.constants.faraday, where);
        c.constants.temperature = number_or(k, "temperature", c.constants.temperature, where);
        c.constants.gas_constant = number_or(k, "gas_constant", c.constants.gas_constant, where);
        c.constants.film_resistance = number_or(k, "film_resistance", c.constants.film_resistance, where);
        c.constants.horizon = number_or(k, "horizon", c.constants.horizon, where);
    }
    c.film_resistance_fixed = number_or(j, "film_resistance_fixed", c.film_resistance_fixed, "model");
    if (j.contains("geometric_scaling")) {
        const auto mode = j.at("geometric_scaling").get<std::string>();
        if (mode == "direct") c.geometric_scaling = GeometricScaling::Direct;
        else if (mode == "volume_fraction") c.geometric_scaling = GeometricScaling::VolumeFraction;
        else throw ConfigError("configuration key 'model.geometric_scaling' must be 'direct' or 'volume_fraction'");
    }

    try {
        c.constants.validate();
        c.positive_reference.validate();
        c.negative_reference.validate();
    } catch (const RangeError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    return c;
}

nlohmann::json ModelConfig::to_json() const {
    nlohmann::json pos = pineapple::to_json(positive_reference);
    pos["fixed_factors"] = factors_to_json(positive_fixed);
    nlohmann::json neg = pineapple::to_json(negative_reference);
    neg["fixed_factors"] = factors_to_json(negative_fixed);
    return {{"positive", pos},
            {"negative", neg},
            {"constants",
             {{"current", constants.current},
              {"faraday", constants.faraday},
              {"temperature", constants.temperature},
              {"gas_constant", constants.gas_constant},
              {"film_resistance", constants.film_resistance},
              {"horizon", constants.horizon}}},
            {"film_resistance_fixed", film_resistance_fixed},
            {"geometric_scaling", geometric_scaling == GeometricScaling::Direct ? "direct" : "volume_fraction"}};
}

ElectrodeParams scale_electrode(const ElectrodeParams& p, const ElectrodeFactors& f, GeometricScaling mode) {
    ElectrodeParams out = p;
    out.diffusion = p.diffusion * f.diffusion;
    out.radius = p.radius * f.radius;
    out.initial_concentration = p.initial_concentration * f.initial_concentration;
    out.max_concentration = p.max_concentration * f.max_concentration;
    out.exchange_current = p.exchange_current * f.exchange_current;
    if (out.geometry) out.geometric = geometric_coefficient(out.radius, *out.geometry);

    if (f.geometric != 1.0) {
        if (mode == GeometricScaling::VolumeFraction && out.geometry) {
            out.geometry->volume_fraction /= f.geometric;
            out.geometric = geometric_coefficient(out.radius, *out.geometry);
        } else {
            out.geometric *= f.geometric;
            out.geometry.reset();
        }
    }
    out.validate();
    return out;
}

CellParameters ModelConfig::baseline() const {
    CellParameters out;
    out.positive = scale_electrode(positive_reference, positive_fixed, geometric_scaling);
    out.negative = scale_electrode(negative_reference, negative_fixed, geometric_scaling);
    out.constants = constants;
    out.constants.film_resistance = constants.film_resistance * film_resistance_fixed;
    return out;
}

CellParameters apply_scaling(const CellParameters& baseline, const ScalingFactors& factors, GeometricScaling mode) {
    CellParameters out = baseline;
    ElectrodeFactors pos;
    pos.diffusion = factors.eta_dp();
    pos.geometric = factors.eta_gp();
    pos.max_concentration = factors.eta_cmaxp();
    ElectrodeFactors neg;
    neg.diffusion = factors.eta_dn();
    out.positive = scale_electrode(baseline.positive, pos, mode);
    out.negative = scale_electrode(baseline.negative, neg, mode);
    return out;
}

CellParameters apply_scaling(const ModelConfig& config, const ScalingFactors& factors) {
    return apply_scaling(config.baseline(), factors, config.geometric_scaling);
}

// ---------------------------------------------------------------------------

Nondimensional nondimensionalize(double diffusion, double radius, double initial_concentration, double surface_flux,
                                 double horizon) {
    if (diffusion == 0.0) throw SingularParameterError("diffusion coefficient is zero");
    require_positive(diffusion, "diffusion coefficient");
    require_positive(radius, "particle radius");
    require_positive(initial_concentration, "initial concentration");
    require_positive(horizon, "horizon");
    if (!std::isfinite(surface_flux)) throw RangeError("surface flux must be finite");
    Nondimensional nd;
    nd.alpha = diffusion * horizon / (radius * radius);
    nd.beta = surface_flux * radius / (diffusion * initial_concentration);
    return nd;
}

double electrode_surface_flux(ElectrodeKind kind, double geometric, const CellConstants& k) {
    const double magnitude = k.current / k.faraday * geometric;
    return kind == ElectrodeKind::Positive ? magnitude : -magnitude;
}

ElectrodeTask ElectrodeTask::make(ElectrodeKind kind, const ElectrodeParams& params, const CellConstants& constants) {
    params.validate();
    ElectrodeTask task;
    task.kind = kind;
    task.params = params;
    task.surface_flux = electrode_surface_flux(kind, params.geometric, constants);
    const auto nd = nondimensionalize(params.diffusion, params.radius, params.initial_concentration,
                                      task.surface_flux, constants.horizon);
    task.alpha = nd.alpha;
    task.beta = nd.beta;
    return task;
}

TaskPair make_task_pair(const CellParameters& params) {
    TaskPair pair{ElectrodeTask::make(ElectrodeKind::Positive, params.positive, params.constants),
                  ElectrodeTask::make(ElectrodeKind::Negative, params.negative, params.constants)};
    const auto& k = params.constants;
    const double scale = k.current / k.faraday;
    if (pair.positive.surface_flux != scale * params.positive.geometric ||
        pair.negative.surface_flux != -scale * params.negative.geometric) {
        throw RangeError("surface flux sign convention violated");
    }
    if (k.current > 0.0 && !(pair.positive.beta > 0.0 && pair.negative.beta < 0.0)) {
        throw RangeError("discharge requires beta_p > 0 and beta_n < 0");
    }
    return pair;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const ElectrodeParams& p) {
    nlohmann::json j = {{"diffusion", p.diffusion},
                        {"radius", p.radius},
                        {"initial_concentration", p.initial_concentration},
                        {"max_concentration", p.max_concentration},
                        {"geometric", p.geometric},
                        {"exchange_current", p.exchange_current}};
    if (p.geometry) {
        j["geometry"] = {{"volume_fraction", p.geometry->volume_fraction},
                         {"area", p.geometry->area},
                         {"thickness", p.geometry->thickness}};
    }
    return j;
}

ElectrodeParams electrode_params_from_json(const nlohmann::json& j, const ElectrodeParams& fallback) {
    ElectrodeParams p = fallback;
    const std::string where = "electrode";
    p.diffusion = number_or(j, "diffusion", p.diffusion, where);
    p.radius = number_or(j, "radius", p.radius, where);
    p.initial_concentration = number_or(j, "initial_concentration", p.initial_concentration, where);
    p.max_concentration = number_or(j, "max_concentration", p.max_concentration, where);
    p.exchange_current = number_or(j, "exchange_current", p.exchange_current, where);
    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        if (g.is_null()) {
            p.geometry.reset();
        } else {
            check_keys(g, {"volume_fraction", "area", "thickness"}, "electrode.geometry");
            ElectrodeGeometry geo = p.geometry.value_or(ElectrodeGeometry{});
            geo.volume_fraction = number_or(g, "volume_fraction", geo.volume_fraction, "electrode.geometry");
            geo.area = number_or(g, "area", geo.area, "electrode.geometry");
            geo.thickness = number_or(g, "thickness", geo.thickness, "electrode.geometry");
            p.geometry = geo;
        }
    }
    if (j.contains("geometric")) {
        p.geometric = number_or(j, "geometric", p.geometric, where);
    } else if (p.geometry) {
        p.geometric = geometric_coefficient(p.radius, *p.geometry);
    }
    return p;
}

nlohmann::json to_json(const ScalingFactors& f) {
    return {{"eta_Dp", f.eta_dp()}, {"eta_Dn", f.eta_dn()}, {"eta_Gp", f.eta_gp()}, {"eta_cmaxp", f.eta_cmaxp()}};
}

ScalingFactors scaling_factors_from_json(const nlohmann::json& j) {
    check_keys(j, {"eta_Dp", "eta_Dn", "eta_Gp", "eta_cmaxp", "bounded"}, "factors");
    std::array<double, kFactorCount> v{};
    for (std::size_t i = 0; i < kFactorCount; ++i) {
        const std::string name(kFactorSpecs[i].name);
        if (!j.contains(name)) throw ConfigError("factors: missing key '" + name + "'");
        v[i] = j.at(name).get<double>();
    }
    const bool bounded = j.value("bounded", true);
    return ScalingFactors::from_array(v, bounded);
}

}  // namespace pineapple
