#include "pineapple/inverse_infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include "pineapple/errors.hpp"
#include "pineapple/evolution.hpp"
#include "pineapple/parallel.hpp"

namespace pineapple {

namespace {
constexpr double kFailedObjective = 1e6;
}

// ---------------------------------------------------------------------------
// Search space

SearchSpace::SearchSpace(std::vector<FactorBound> bounds) : bounds_(std::move(bounds)) {
    if (bounds_.empty()) throw ConfigError("search space needs at least one factor");
    for (const auto& b : bounds_) {
        if (!(b.lower < b.upper) || !std::isfinite(b.lower) || !std::isfinite(b.upper))
            throw ConfigError("search bounds for " + std::string(factor_spec(b.factor).name) + " are invalid");
        if (b.log_encoded && !(b.lower > 0.0))
            throw ConfigError("log-encoded factor " + std::string(factor_spec(b.factor).name) + " needs lower > 0");
        const auto& spec = factor_spec(b.factor);
        if (b.lower < spec.lower || b.upper > spec.upper)
            throw ConfigError("search bounds for " + std::string(spec.name) + " exceed the declared range");
    }
}

SearchSpace SearchSpace::defaults() {
    std::vector<FactorBound> b;
    for (const auto& s : kFactorSpecs) b.push_back({s.factor, s.lower, s.upper, s.log_encoded});
    return SearchSpace(std::move(b));
}

Eigen::VectorXd SearchSpace::encode(const ScalingFactors& f) const {
    Eigen::VectorXd u(dimension());
    for (int i = 0; i < dimension(); ++i) {
        const auto& b = bounds_[i];
        const double v = f[b.factor];
        u[i] = b.log_encoded ? (std::log10(v) - std::log10(b.lower)) / (std::log10(b.upper) - std::log10(b.lower))
                             : (v - b.lower) / (b.upper - b.lower);
    }
    return u;
}

ScalingFactors SearchSpace::decode(const Eigen::VectorXd& u, const ScalingFactors& fixed) const {
    if (u.size() != dimension()) throw ConfigError("encoded vector has wrong dimension");
    auto values = fixed.values();
    for (int i = 0; i < dimension(); ++i) {
        const auto& b = bounds_[i];
        const double x = std::clamp(u[i], 0.0, 1.0);
        double v = b.log_encoded
                       ? std::pow(10.0, std::log10(b.lower) + x * (std::log10(b.upper) - std::log10(b.lower)))
                       : b.lower + x * (b.upper - b.lower);
        values[static_cast<int>(b.factor)] = std::clamp(v, b.lower, b.upper);
    }
    return ScalingFactors::from_array(values);
}

double SearchSpace::outside_distance_sq(const Eigen::VectorXd& u) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        const double d = u[i] - std::clamp(u[i], 0.0, 1.0);
        s += d * d;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Objective

DischargeCurve prepare_observed(const DischargeCurve& observed, double horizon, int max_samples) {
    if (observed.t.size() != observed.v.size()) throw FormatError("observed curve: t and V lengths differ");
    if (max_samples < kMinObservedSamples) throw ConfigError("max_samples must be >= 10");
    DischargeCurve within = observed;
    within.t.clear();
    within.v.clear();
    for (std::size_t i = 0; i < observed.t.size(); ++i) {
        if (observed.t[i] < 0.0 || observed.t[i] > horizon) continue;
        within.t.push_back(observed.t[i]);
        within.v.push_back(observed.v[i]);
    }
    if (within.t.empty()) throw EmptyCurveError("observed curve has no samples within [0, T]");
    if (static_cast<int>(within.t.size()) < kMinObservedSamples)
        throw EmptyCurveError("observed curve has fewer than 10 samples within [0, T]");
    const std::size_t n = within.t.size();
    if (static_cast<int>(n) <= max_samples) return within;
    const std::size_t stride = (n + max_samples - 1) / max_samples;
    DischargeCurve out = within;
    out.t.clear();
    out.v.clear();
    for (std::size_t i = 0; i < n; i += stride) {
        out.t.push_back(within.t[i]);
        out.v.push_back(within.v[i]);
    }
    return out;
}

InverseObjective::InverseObjective(const ModelConfig& config, const OcpPair& ocp, const SurfaceModel& surface,
                                   DischargeCurve observed)
    : observed_(std::move(observed)), synth_(config, ocp, surface, observed_.t) {
    if (observed_.t.empty()) throw EmptyCurveError("observed curve is empty");
}

ObjectiveValue InverseObjective::operator()(const ScalingFactors& factors) const {
    const SynthesisResult s = synth_(factors, false);
    ObjectiveValue val;
    const std::size_t n = observed_.v.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = s.points[i].v - observed_.v[i];
        sum += d * d;
        val.clamped += s.points[i].clamped ? 1 : 0;
    }
    val.mse = sum / n;
    const double frac = static_cast<double>(val.clamped) / n;
    val.penalty = kClampPenaltyWeight * frac * frac;
    return val;
}

// ---------------------------------------------------------------------------
// CMA-ES restarts

void InverseProtocol::validate() const {
    if (restarts < 4 || restarts % 2 != 0) throw ConfigError("restarts must be an even number >= 4");
    if (generations < 1) throw ConfigError("generations must be >= 1");
    if (population < 2) throw ConfigError("population must be >= 2");
    if (!(initial_step > 0.0)) throw ConfigError("initial_step must be > 0");
    if (max_samples < kMinObservedSamples) throw ConfigError("max_samples must be >= 10");
}

nlohmann::json InverseProtocol::to_json() const {
    return {{"restarts", restarts},     {"generations", generations}, {"population", population},
            {"seed", seed},             {"initial_step", initial_step}, {"max_samples", max_samples}};
}

nlohmann::json InferenceRun::to_json() const {
    return {{"restart", restart}, {"seed", seed},     {"factors", pineapple::to_json(factors)},
            {"mse", mse},         {"status", status}, {"evaluations", evaluations},
            {"trace", trace}};
}

InferenceRun run_cmaes(const InverseObjective& objective, const SearchSpace& space, const InverseProtocol& protocol,
                       int restart, std::uint64_t seed) {
    const int d = space.dimension();
    std::mt19937_64 init_rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXd u0(d);
    for (int i = 0; i < d; ++i) u0[i] = unit(init_rng);

    Cmaes es(u0, protocol.initial_step, CmaesOptions{protocol.population, derive_seed(seed, {1})});
    InferenceRun run;
    run.restart = restart;
    run.seed = seed;
    double best = std::numeric_limits<double>::infinity();
    ObjectiveValue best_value;
    bool converged = false;

    for (int g = 0; g < protocol.generations; ++g) {
        const auto candidates = es.ask();
        std::vector<double> rank(candidates.size());
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            const ScalingFactors f = space.decode(candidates[k]);
            ObjectiveValue v;
            try {
                v = objective(f);
            } catch (const Error&) {
                v.mse = kFailedObjective;
            }
            ++run.evaluations;
            const double total = std::isfinite(v.total()) ? v.total() : kFailedObjective;
            rank[k] = total + kBoundaryPenaltyWeight * SearchSpace::outside_distance_sq(candidates[k]);
            if (total < best) {
                best = total;
                best_value = v;
                run.factors = f;
            }
        }
        es.tell(candidates, rank);
        run.trace.push_back(best);
        const int n = static_cast<int>(run.trace.size());
        if (es.max_step() < 1e-3 || (n > 10 && run.trace[n - 11] - best <= 1e-6 * run.trace[n - 11])) converged = true;
    }
    run.mse = best;
    if (best_value.penalty > 0.0 || best >= kFailedObjective) {
        run.status = "penalized";
    } else {
        run.status = converged ? "converged" : "stalled";
    }
    return run;
}

std::vector<int> filter_lowest_half(const std::vector<InferenceRun>& runs) {
    std::vector<double> mse;
    for (const auto& r : runs) mse.push_back(r.mse);
    auto order = argsort(mse);
    order.resize((runs.size() + 1) / 2);
    return order;
}

namespace {

double median_sorted(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

FactorSummary summarize(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return {};
    return {v.front(), median_sorted(v), v.back()};
}

}  // namespace

std::vector<const InferenceRun*> CycleInference::filtered_runs() const {
    std::vector<const InferenceRun*> out;
    for (int i : filtered) out.push_back(&runs[i]);
    return out;
}

CycleInference summarize_cycle(std::string battery_id, int cycle, std::vector<InferenceRun> runs, double capacity_ah) {
    CycleInference c;
    c.battery_id = std::move(battery_id);
    c.cycle = cycle;
    c.runs = std::move(runs);
    c.capacity_ah = capacity_ah;
    c.filtered = filter_lowest_half(c.runs);
    std::vector<double> mse;
    for (std::size_t f = 0; f < kFactorCount; ++f) {
        std::vector<double> v;
        for (int i : c.filtered) v.push_back(c.runs[i].factors.values()[f]);
        c.summary[f] = summarize(v);
    }
    for (int i : c.filtered) mse.push_back(c.runs[i].mse);
    c.mse_summary = summarize(mse);
    const bool all_penalized =
        !c.runs.empty() && std::all_of(c.runs.begin(), c.runs.end(), [](const auto& r) { return r.status == "penalized"; });
    if (all_penalized) c.status = "all-penalized";
    return c;
}

CycleInference infer_cycle(const InverseObjective& objective, const SearchSpace& space, const InverseProtocol& protocol,
                           int cycle) {
    protocol.validate();
    std::vector<InferenceRun> runs(protocol.restarts);
    parallel_for(protocol.restarts, protocol.jobs, [&](int r) {
        runs[r] = run_cmaes(objective, space, protocol, r,
                            derive_seed(protocol.seed, {static_cast<std::uint64_t>(cycle), static_cast<std::uint64_t>(r)}));
    });
    const auto& obs = objective.observed();
    return summarize_cycle(obs.battery_id, cycle, std::move(runs), obs.current * obs.duration() / 3600.0);
}

nlohmann::json CycleInference::to_json() const {
    nlohmann::json j;
    j["battery_id"] = battery_id;
    j["cycle"] = cycle;
    j["status"] = status;
    j["capacity_Ah"] = capacity_ah;
    j["runs"] = nlohmann::json::array();
    for (const auto& r : runs) j["runs"].push_back(r.to_json());
    j["filtered"] = filtered;
    nlohmann::json s;
    for (std::size_t f = 0; f < kFactorCount; ++f)
        s[std::string(kFactorSpecs[f].name)] = {{"min", summary[f].min}, {"median", summary[f].median}, {"max", summary[f].max}};
    s["mse"] = {{"min", mse_summary.min}, {"median", mse_summary.median}, {"max", mse_summary.max}};
    j["summary"] = s;
    return j;
}

// ---------------------------------------------------------------------------
// Diagnostics

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const auto order = argsort(v);
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * (i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ConfigError("spearman: vectors differ in length");
    if (x.size() < 2) return std::nullopt;
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

double normalized_inference_error(const ScalingFactors& inferred, const ScalingFactors& truth, const SearchSpace& space) {
    double s = 0.0;
    for (const auto& b : space.bounds()) {
        const double e = (inferred[b.factor] - truth[b.factor]) / (b.upper - b.lower);
        s += e * e;
    }
    return std::sqrt(s / space.dimension());
}

std::vector<CorrelationRow> correlation_diagnostics(const std::vector<InferenceRun>& runs, const ScalingFactors& truth,
                                                    const SearchSpace& space) {
    if (runs.size() < 20) throw ConfigError("correlation diagnostics need >= 20 runs");
    std::vector<double> mse;
    for (const auto& r : runs) mse.push_back(r.mse);
    const auto order = argsort(mse);
    std::vector<CorrelationRow> rows;
    for (double pct : {100.0, 75.0, 50.0, 25.0}) {
        const auto keep = static_cast<std::size_t>(std::ceil(pct / 100.0 * runs.size()));
        std::vector<double> m, e;
        for (std::size_t k = 0; k < keep; ++k) {
            m.push_back(runs[order[k]].mse);
            e.push_back(normalized_inference_error(runs[order[k]].factors, truth, space));
        }
        rows.push_back({pct, static_cast<int>(keep), spearman(m, e)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Sensitivity

double SensitivityResult::max_deviation(Factor f) const {
    double m = 0.0;
    for (const auto& c : curves)
        if (c.factor == f) m = std::max(m, c.max_deviation);
    return m;
}

SensitivityResult sensitivity_scan(const ScalingFactors& reference, const std::vector<double>& relative_changes,
                                   const VoltageSynthesizer& synth, const std::vector<Factor>& factors) {
    std::vector<Factor> which = factors;
    if (which.empty())
        for (const auto& s : kFactorSpecs) which.push_back(s.factor);
    SensitivityResult res;
    res.reference = reference;
    res.reference_curve = synth(reference, true).curve;
    for (Factor f : which) {
        for (double rel : relative_changes) {
            SensitivityCurve sc;
            sc.factor = f;
            sc.relative_change = rel;
            sc.factors = reference.with(f, reference[f] * (1.0 + rel), true);
            sc.curve = synth(sc.factors, true).curve;
            const std::size_t n = std::min(sc.curve.size(), res.reference_curve.size());
            for (std::size_t i = 0; i < n; ++i)
                sc.max_deviation = std::max(sc.max_deviation, std::abs(sc.curve.v[i] - res.reference_curve.v[i]));
            res.curves.push_back(std::move(sc));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Battery series

BatteryInference infer_battery(const std::vector<DischargeCurve>& curves, const ModelConfig& config, const OcpPair& ocp,
                               const SurfaceModel& surface, const InverseProtocol& protocol, const SearchSpace& space,
                               std::string basis_id) {
    protocol.validate();
    BatteryInference out;
    out.basis_id = std::move(basis_id);
    out.protocol = protocol;
    if (curves.empty()) {
        out.warnings.push_back("no discharge curves to infer");
        return out;
    }
    out.battery_id = curves.front().battery_id;

    struct Slot {
        std::unique_ptr<InverseObjective> objective;
        double capacity = 0.0;
        std::string error;
    };
    std::vector<Slot> slots(curves.size());
    for (std::size_t c = 0; c < curves.size(); ++c) {
        try {
            const double horizon = config.constants.horizon;
            DischargeCurve within = prepare_observed(curves[c], horizon, std::numeric_limits<int>::max());
            slots[c].capacity = within.current * within.duration() / 3600.0;
            slots[c].objective = std::make_unique<InverseObjective>(
                config, ocp, surface, prepare_observed(within, horizon, protocol.max_samples));
        } catch (const Error& e) {
            slots[c].error = e.what();
        }
    }

    const int per = protocol.restarts;
    std::vector<std::vector<InferenceRun>> runs(curves.size(), std::vector<InferenceRun>(per));
    parallel_for(static_cast<int>(curves.size()) * per, protocol.jobs, [&](int k) {
        const int c = k / per, r = k % per;
        if (!slots[c].objective) return;
        const auto cycle = static_cast<std::uint64_t>(curves[c].cycle);
        runs[c][r] = run_cmaes(*slots[c].objective, space, protocol, r,
                               derive_seed(protocol.seed, {cycle, static_cast<std::uint64_t>(r)}));
    });

    for (std::size_t c = 0; c < curves.size(); ++c) {
        if (!slots[c].objective) {
            CycleInference failed;
            failed.battery_id = curves[c].battery_id;
            failed.cycle = curves[c].cycle;
            failed.status = "failed";
            out.warnings.push_back("cycle " + std::to_string(curves[c].cycle) + ": " + slots[c].error);
            out.cycles.push_back(std::move(failed));
            continue;
        }
        out.cycles.push_back(summarize_cycle(curves[c].battery_id, curves[c].cycle, std::move(runs[c]), slots[c].capacity));
    }
    return out;
}

nlohmann::json BatteryInference::to_json() const {
    nlohmann::json j;
    j["battery_id"] = battery_id;
    j["basis_id"] = basis_id;
    j["protocol"] = protocol.to_json();
    j["cycles"] = nlohmann::json::array();
    for (const auto& c : cycles) j["cycles"].push_back(c.to_json());
    j["warnings"] = warnings;
    return j;
}

void BatteryInference::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "battery,cycle,factor,min,median,max,mse_median,capacity_Ah\n" << std::setprecision(17);
    for (const auto& c : cycles) {
        if (c.status == "failed") continue;
        for (std::size_t f = 0; f < kFactorCount; ++f) {
            out << c.battery_id << ',' << c.cycle << ',' << kFactorSpecs[f].name << ',' << c.summary[f].min << ','
                << c.summary[f].median << ',' << c.summary[f].max << ',' << c.mse_summary.median << ',' << c.capacity_ah
                << '\n';
        }
    }
}

}  // namespace pineapple
