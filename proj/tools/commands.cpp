#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>

#include "pineapple/errors.hpp"
#include "pineapple/evolution.hpp"
#include "pineapple/inverse_infer.hpp"
#include "pineapple/meta_train.hpp"
#include "pineapple/parallel.hpp"
#include "pineapple/reference_solver.hpp"

namespace pineapple::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string default_out_dir(const std::string& command) {
    const char* env = std::getenv(kRunDirEnv);
    const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
    return (root / command).string();
}

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
    return j.contains(key) ? get<T>(j, key, where) : fallback;
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << j.dump(2) << '\n';
}

ManifestEntry input_entry(const std::string& path) { return {absolute(path), sha256_file(path), true}; }

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << std::setprecision(10);
    return out;
}

void log(const CommandContext& ctx, const std::string& msg) {
    if (!ctx.quiet) std::cerr << msg << '\n';
}

// Surfaces -------------------------------------------------------------------

struct LoadedSurface {
    std::unique_ptr<SurfaceModel> model;
    std::string id;  // "reference" or the first 16 hex digits of the basis hash
};

LoadedSurface load_surface(const std::string& basis, RunManifest& manifest) {
    if (basis == "reference") return {std::make_unique<ReferenceSurface>(), "reference"};
    manifest.inputs.push_back(input_entry(basis));
    auto b = std::make_shared<const FeatureBasis>(FeatureBasis::load(basis));
    return {std::make_unique<SurrogateSurface>(b), manifest.inputs.back().sha256.substr(0, 16)};
}

std::string basis_arg(const json& cfg, const std::string& where) {
    const auto b = get<std::string>(cfg, "basis", where);
    return b == "reference" ? b : absolute(b);
}

// Ranges ------------------------------------------------------------------------

std::pair<double, double> read_range(const json& j, const std::string& key, std::pair<double, double> fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError("ranges." + key + ": expected [lower, upper]");
    const double lo = v[0].get<double>(), hi = v[1].get<double>();
    if (!(lo > 0.0) || !std::isfinite(hi)) throw ConfigError("ranges." + key + ": bounds must be finite and positive");
    if (lo > hi) throw ConfigError("ranges." + key + ": lower bound exceeds upper bound");
    return {lo, hi};
}

json factors_json(const ScalingFactors& f) { return pineapple::to_json(f); }

std::vector<double> read_doubles(const json& j, const std::string& key, std::vector<double> fallback,
                                 const std::string& where) {
    return get_or<std::vector<double>>(j, key, std::move(fallback), where);
}

InverseProtocol read_protocol(const json& j, const CommandContext& ctx) {
    check_keys(j, {"restarts", "generations", "population", "seed", "initial_step", "max_samples"}, "protocol");
    InverseProtocol p;
    p.restarts = get_or(j, "restarts", p.restarts, "protocol");
    p.generations = get_or(j, "generations", p.generations, "protocol");
    p.population = get_or(j, "population", p.population, "protocol");
    p.seed = get_or<std::uint64_t>(j, "seed", p.seed, "protocol");
    p.initial_step = get_or(j, "initial_step", p.initial_step, "protocol");
    p.max_samples = get_or(j, "max_samples", p.max_samples, "protocol");
    p.jobs = ctx.jobs;
    p.validate();
    return p;
}

// gen-tasks ------------------------------------------------------------------

RunManifest gen_tasks(const json& cfg, const std::string& out, const CommandContext& ctx) {
    check_keys(cfg, {"seed", "ranges", "counts", "model"}, "gen-tasks");
    const auto seed = get<std::uint64_t>(cfg, "seed", "gen-tasks");
    const json ranges_j = cfg.value("ranges", json::object());
    check_keys(ranges_j, {"dp", "gp", "dn"}, "ranges");
    TaskRanges ranges;
    std::tie(ranges.dp_lower, ranges.dp_upper) = read_range(ranges_j, "dp", {ranges.dp_lower, ranges.dp_upper});
    std::tie(ranges.gp_lower, ranges.gp_upper) = read_range(ranges_j, "gp", {ranges.gp_lower, ranges.gp_upper});
    std::tie(ranges.dn_lower, ranges.dn_upper) = read_range(ranges_j, "dn", {ranges.dn_lower, ranges.dn_upper});
    const json counts_j = cfg.value("counts", json::object());
    check_keys(counts_j, {"train_positive", "train_negative", "test_positive", "test_negative"}, "counts");
    TaskCounts counts;
    counts.train_positive = get_or(counts_j, "train_positive", counts.train_positive, "counts");
    counts.train_negative = get_or(counts_j, "train_negative", counts.train_negative, "counts");
    counts.test_positive = get_or(counts_j, "test_positive", counts.test_positive, "counts");
    counts.test_negative = get_or(counts_j, "test_negative", counts.test_negative, "counts");
    counts.validate();
    const ModelConfig model = ModelConfig::from_json(cfg.value("model", json::object()));

    RunManifest m;
    m.command = "gen-tasks";
    m.seeds = {{"seed", seed}};
    m.config = {{"seed", seed},
                {"ranges", {{"dp", {ranges.dp_lower, ranges.dp_upper}},
                            {"gp", {ranges.gp_lower, ranges.gp_upper}},
                            {"dn", {ranges.dn_lower, ranges.dn_upper}}}},
                {"counts", {{"train_positive", counts.train_positive},
                            {"train_negative", counts.train_negative},
                            {"test_positive", counts.test_positive},
                            {"test_negative", counts.test_negative}}},
                {"model", model.to_json()}};

    log(ctx, "solving " + std::to_string(counts.train_positive + counts.train_negative + counts.test_positive +
                                          counts.test_negative) + " reference tasks");
    const TaskSet set = sample_tasks(model, ranges, counts, seed, ctx.jobs);
    RunDirectory dir(out);
    set.save(out);
    m.outputs.push_back(dir.entry(dir.file("", "tasks.json")));
    for (const char* sub : {"tasks", "labels"}) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(out) / sub)) files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) m.outputs.push_back(dir.entry(f));
    }
    return m;
}

// train-meta -----------------------------------------------------------------

json held_out_report(const std::shared_ptr<const FeatureBasis>& basis, const TaskSet& set,
                     const CollocationSet& colloc, const std::string& csv_path) {
    const auto errs = held_out_errors(basis, set.test, colloc);
    auto csv = open_csv(csv_path);
    csv << "task_id,kind,diffusion,geometric,relative_l2\n";
    std::map<std::string, std::vector<double>> by_kind;
    for (std::size_t i = 0; i < set.test.size(); ++i) {
        const auto& t = set.test[i];
        const std::string kind(to_string(t.kind));
        csv << t.id << ',' << kind << ',' << t.diffusion << ',' << t.geometric << ',' << errs[i] << '\n';
        by_kind[kind].push_back(errs[i]);
    }
    json summary = json::object();
    for (const auto& [kind, v] : by_kind) {
        double mean = 0.0;
        for (double e : v) mean += e;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double e : v) var += (e - mean) * (e - mean);
        summary[kind] = {{"count", v.size()},
                         {"mean", mean},
                         {"sd", v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0},
                         {"max", *std::max_element(v.begin(), v.end())}};
    }
    return summary;
}

RunManifest train_meta(const json& cfg, const std::string& out, const CommandContext& ctx) {
    check_keys(cfg, {"tasks", "meta"}, "train-meta");
    const std::string tasks_dir = absolute(get<std::string>(cfg, "tasks", "train-meta"));
    MetaTrainConfig mc = MetaTrainConfig::from_json(cfg.value("meta", json::object()));
    mc.jobs = ctx.jobs;

    RunManifest m;
    m.command = "train-meta";
    m.seeds = {{"seed", mc.seed}};
    m.config = {{"tasks", tasks_dir}, {"meta", mc.to_json()}};
    m.inputs.push_back(input_entry((fs::path(tasks_dir) / "tasks.json").string()));

    const TaskSet set = TaskSet::load(tasks_dir);
    RunDirectory dir(out);
    const std::string run_id = "train-meta-" + m.inputs.back().sha256.substr(0, 12) + "-seed" + std::to_string(mc.seed);

    const auto t0 = std::chrono::steady_clock::now();
    const auto result = run_meta_training(mc, set.train, run_id, [&](const GenerationStats& g) {
        if (ctx.quiet) return;
        std::cerr << "generation " << g.generation << " best " << g.best << " median " << g.median;
        if (g.penalized) std::cerr << " penalized " << g.penalized;
        std::cerr << '\n';
    });
    const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string basis_path = dir.file("basis", "basis.json");
    result.basis.save(basis_path);
    m.outputs.push_back(dir.entry(basis_path));
    write_json(dir.file("basis", "genome.json"), result.best_genome.to_json());
    m.outputs.push_back(dir.entry(dir.file("basis", "genome.json")));
    const std::string hist = dir.file("reports", "fitness_history.csv");
    write_fitness_history_csv(hist, result.history);
    m.outputs.push_back(dir.entry(hist));

    auto basis = std::make_shared<const FeatureBasis>(result.basis);
    const auto colloc = CollocationSet::tensor(mc.colloc_n_t, mc.colloc_n_r);
    const std::string held = dir.file("reports", "held_out.csv");
    const json held_summary = held_out_report(basis, set, colloc, held);
    m.outputs.push_back(dir.entry(held));
    write_json(dir.file("reports", "summary.json"), {{"best_fitness", result.best_fitness},
                                                     {"status", result.status},
                                                     {"generations_run", result.history.size()},
                                                     {"held_out", held_summary},
                                                     {"run_id", run_id}});
    m.outputs.push_back(dir.entry(dir.file("reports", "summary.json")));
    write_json(dir.file("reports", "timing.json"),
               {{"train_seconds", train_seconds}, {"jobs", resolve_jobs(ctx.jobs)}});
    m.outputs.push_back(dir.entry(dir.file("reports", "timing.json"), false));
    log(ctx, "meta-training " + result.status + ", best fitness " + std::to_string(result.best_fitness));
    return m;
}

// benchmark ------------------------------------------------------------------

struct TimedRow {
    std::string method;
    int mesh = 0;
    double error = 0.0;
    double mean_ms = 0.0;
    double sd_ms = 0.0;
};

template <typename Fn>
std::pair<double, double> time_repeats(int repeats, Fn&& fn) {
    std::vector<double> ms;
    for (int k = 0; k < repeats; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    double mean = 0.0;
    for (double v : ms) mean += v;
    mean /= ms.size();
    double var = 0.0;
    for (double v : ms) var += (v - mean) * (v - mean);
    return {mean, ms.size() > 1 ? std::sqrt(var / (ms.size() - 1)) : 0.0};
}

RunManifest benchmark(const json& cfg, const std::string& out, const CommandContext& ctx) {
    check_keys(cfg, {"basis", "task", "meshes", "repeats"}, "benchmark");
    const std::string basis_path = absolute(get<std::string>(cfg, "basis", "benchmark"));
    const json task_j = get<json>(cfg, "task", "benchmark");
    Nondimensional task{get<double>(task_j, "alpha", "task"), get<double>(task_j, "beta", "task")};
    const auto meshes = get_or<std::vector<int>>(cfg, "meshes", {16, 32, 64, 128, 256}, "benchmark");
    const int repeats = get_or(cfg, "repeats", 25, "benchmark");
    if (repeats < 5) throw ConfigError("benchmark.repeats must be >= 5");

    RunManifest m;
    m.command = "benchmark";
    m.config = {{"basis", basis_path}, {"task", task_j}, {"meshes", meshes}, {"repeats", repeats}};
    m.inputs.push_back(input_entry(basis_path));
    auto basis = std::make_shared<const FeatureBasis>(FeatureBasis::load(basis_path));

    std::vector<TimedRow> rows;
    for (const auto& r : benchmark_solver(task, meshes, repeats))
        rows.push_back({"reference-solver", r.mesh, r.relative_error, r.time_mean_ms, r.time_sd_ms});

    const ConcentrationField reference = benchmark_reference(task);
    const CollocationSet colloc = CollocationSet::tensor();
    std::shared_ptr<const PreparedSystem> prepared;
    const auto setup = time_repeats(repeats, [&] { prepared = std::make_shared<const PreparedSystem>(basis, colloc); });

    Eigen::MatrixXd grid;
    const auto tuned = time_repeats(repeats, [&] { grid = prepared->solve(task).eval_grid(reference.r, reference.t); });
    rows.push_back({"basis", 0, relative_l2(grid, reference.values), tuned.first, tuned.second});

    // grid features cached with the basis; only the solve and one product remain per task
    std::vector<Point> pts = label_points(static_cast<int>(reference.n_t()), static_cast<int>(reference.n_r()));
    const Eigen::MatrixXd phi = basis->values(pts);
    Eigen::VectorXd flat;
    const auto cached = time_repeats(repeats, [&] { flat = phi * prepared->solve_weights(task); });
    Eigen::MatrixXd cached_grid(reference.n_t(), reference.n_r());
    for (Eigen::Index i = 0; i < cached_grid.rows(); ++i)
        cached_grid.row(i) = flat.segment(i * cached_grid.cols(), cached_grid.cols()).transpose();
    rows.push_back({"basis-cached-features", 0, relative_l2(cached_grid, reference.values), cached.first, cached.second});
    rows.push_back({"basis-setup", 0, 0.0, setup.first, setup.second});

    RunDirectory dir(out);
    const std::string acc = dir.file("reports", "benchmark_accuracy.csv");
    {
        auto csv = open_csv(acc);
        csv << "method,mesh,relative_error\n";
        for (const auto& r : rows)
            if (r.method != "basis-setup") csv << r.method << ',' << r.mesh << ',' << r.error << '\n';
    }
    m.outputs.push_back(dir.entry(acc));
    const std::string timing = dir.file("reports", "benchmark.csv");
    {
        auto csv = open_csv(timing);
        csv << "method,mesh,relative_error,time_mean_ms,time_sd_ms\n";
        for (const auto& r : rows)
            csv << r.method << ',' << r.mesh << ',' << r.error << ',' << r.mean_ms << ',' << r.sd_ms << '\n';
    }
    m.outputs.push_back(dir.entry(timing, false));
    for (const auto& r : rows)
        log(ctx, r.method + (r.mesh ? " " + std::to_string(r.mesh) : std::string()) + ": error " +
                     std::to_string(r.error) + ", " + std::to_string(r.mean_ms) + " ms");
    return m;
}

// synthesize -------------------------------------------------------------------

RunManifest synthesize(const json& cfg, const std::string& out, const CommandContext& ctx) {
    check_keys(cfg, {"basis", "battery_id", "states", "samples", "noise_v", "seed"}, "synthesize");
    const std::string basis = basis_arg(cfg, "synthesize");
    const auto battery = get_or<std::string>(cfg, "battery_id", "synthetic", "synthesize");
    const int samples = get_or(cfg, "samples", 601, "synthesize");
    const double noise = get_or(cfg, "noise_v", 0.0, "synthesize");
    const auto seed = get_or<std::uint64_t>(cfg, "seed", 1, "synthesize");
    const json states = get<json>(cfg, "states", "synthesize");
    if (!states.is_array() || states.empty()) throw ConfigError("synthesize.states: expected a non-empty array");
    if (samples < kMinObservedSamples) throw ConfigError("synthesize.samples must be >= 10");
    if (!(noise >= 0.0)) throw ConfigError("synthesize.noise_v must be >= 0");

    RunManifest m;
    m.command = "synthesize";
    m.seeds = {{"seed", seed}};
    auto surface = load_surface(basis, m);
    const auto config = ModelConfig::defaults();
    const auto ocp = OcpPair::defaults();
    VoltageSynthesizer synth(config, ocp, *surface.model, uniform_times(samples));

    std::vector<DischargeCurve> curves;
    json states_norm = json::array();
    for (std::size_t k = 0; k < states.size(); ++k) {
        const auto& s = states[k];
        check_keys(s, {"cycle", "factors"}, "synthesize.states");
        const int cycle = get_or(s, "cycle", static_cast<int>(k) + 1, "synthesize.states");
        const ScalingFactors f = scaling_factors_from_json(get<json>(s, "factors", "synthesize.states"));
        states_norm.push_back({{"cycle", cycle}, {"factors", factors_json(f)}});
        const auto res = synth(f, true);
        if (res.implausible) throw Error("state " + std::to_string(k) + " gives an implausible curve");
        DischargeCurve c = res.curve;
        c.battery_id = battery;
        c.cycle = cycle;
        if (noise > 0.0) {
            std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(cycle)}));
            std::uniform_real_distribution<double> u(-noise, noise);
            for (auto& v : c.v) v += u(rng);
            while (!c.v.empty() && c.v.back() < c.cutoff) {
                c.v.pop_back();
                c.t.pop_back();
            }
        }
        curves.push_back(std::move(c));
    }
    m.config = {{"basis", basis},   {"battery_id", battery}, {"states", states_norm},
                {"samples", samples}, {"noise_v", noise},     {"seed", seed}};

    RunDirectory dir(out);
    const std::string cj = dir.file("data", "curves.json");
    write_json(cj, curves_to_json(curves));
    m.outputs.push_back(dir.entry(cj));
    const std::string cc = dir.file("data", "curves.csv");
    write_curves_csv(cc, curves);
    m.outputs.push_back(dir.entry(cc));
    std::vector<CyclingRecordRow> rows;
    double t0 = 0.0;
    for (const auto& c : curves) {
        auto r = embed_in_cycle(c, c.cycle, t0);
        t0 = r.back().time_s + 60.0;
        rows.insert(rows.end(), r.begin(), r.end());
    }
    const std::string cyc = dir.file("data", "cycling.csv");
    export_rows_csv(cyc, rows);
    m.outputs.push_back(dir.entry(cyc));
    log(ctx, "synthesized " + std::to_string(curves.size()) + " curves");
    return m;
}

// ingest -----------------------------------------------------------------------

RunManifest ingest(const json& cfg, const std::string& out, const CommandContext& ctx) {
    check_keys(cfg, {"input", "schema", "extract"}, "ingest");
    const std::string input = absolute(get<std::string>(cfg, "input", "ingest"));
    const SchemaConfig schema = SchemaConfig::from_json(cfg.value("schema", json::object()));
    const json ex = cfg.value("extract", json::object());
    check_keys(ex, {"current", "tolerance", "cutoff", "min_samples"}, "extract");
    ExtractOptions opt;
    opt.current = get_or(ex, "current", opt.current, "extract");
    opt.tolerance = get_or(ex, "tolerance", opt.tolerance, "extract");
    opt.cutoff = get_or(ex, "cutoff", opt.cutoff, "extract");
    opt.min_samples = get_or(ex, "min_samples", opt.min_samples, "extract");
    if (!(opt.current > 0.0) || !(opt.tolerance > 0.0)) throw ConfigError("extract: current and tolerance must be > 0");

    RunManifest m;
    m.command = "ingest";
    m.config = {{"input", input},
                {"schema", schema.to_json()},
                {"extract", {{"current", opt.current},
                             {"tolerance", opt.tolerance},
                             {"cutoff", opt.cutoff},
                             {"min_samples", opt.min_samples}}}};
    m.inputs.push_back(input_entry(input));

    const IngestResult ing = ingest_csv(input, schema);
    const ExtractResult ext = extract_discharge(ing.rows, schema.battery_id, opt);
    RunDirectory dir(out);
    const std::string rows = dir.file("data", "rows.csv");
    export_rows_csv(rows, ing.rows);
    m.outputs.push_back(dir.entry(rows));
    const std::string rej = dir.file("reports", "rejects.csv");
    ing.write_rejects_csv(rej);
    m.outputs.push_back(dir.entry(rej));
    const std::string cj = dir.file("data", "curves.json");
    write_json(cj, curves_to_json(ext.curves));
    m.outputs.push_back(dir.entry(cj));
    const std::string cc = dir.file("data", "curves.csv");
    write_curves_csv(cc, ext.curves);
    m.outputs.push_back(dir.entry(cc));
    const std::string rep = dir.file("reports", "ingest.json");
    write_json(rep, {{"battery_id", schema.battery_id},
                     {"data_lines", ing.data_lines},
                     {"rows", ing.rows.size()},
                     {"rejected", ing.rejects.size()},
                     {"cycles", ing.cycles()},
                     {"curves", ext.curves.size()},
                     {"warnings", ext.warnings},
                     {"status", ext.status}});
    m.outputs.push_back(dir.entry(rep));
    for (const auto& w : ext.warnings) log(ctx, "warning: " + w);
    log(ctx, "ingested " + std::to_string(ing.rows.size()) + " rows, " + std::to_string(ing.rejects.size()) +
                 " rejected, " + std::to_string(ext.curves.size()) + " discharge curves");
    return m;
}

// infer ------------------------------------------------------------------------

void write_runs_csv(std::ofstream& csv, const std::string& prefix, const CycleInference& ci,
                    const ScalingFactors* truth, const SearchSpace& space) {
    std::set<int> kept(ci.filtered.begin(), ci.filtered.end());
    for (std::size_t i = 0; i < ci.runs.size(); ++i) {
        const auto& r = ci.runs[i];
        csv << prefix << r.restart << ',' << r.seed << ',' << r.mse << ',' << r.status << ',' << kept.count(i) << ','
            << r.evaluations;
        for (double v : r.factors.values()) csv << ',' << v;
        if (truth) csv << ',' << normalized_inference_error(r.factors, *truth, space);
        csv << '\n';
    }
}

RunManifest infer(const json& cfg, const std::string& out, const CommandContext& ctx) {
    check_keys(cfg, {"basis", "curves", "protocol"}, "infer");
    const std::string basis = basis_arg(cfg, "infer");
    const std::string curves_path = absolute(get<std::string>(cfg, "curves", "infer"));
    const InverseProtocol protocol = read_protocol(cfg.value("protocol", json::object()), ctx);

    RunManifest m;
    m.command = "infer";
    m.seeds = {{"seed", protocol.seed}};
    m.config = {{"basis", basis}, {"curves", curves_path}, {"protocol", protocol.to_json()}};
    auto surface = load_surface(basis, m);
    m.inputs.push_back(input_entry(curves_path));
    const auto curves = load_curves(curves_path);

    std::vector<std::string> batteries;
    std::map<std::string, std::vector<DischargeCurve>> by_battery;
    for (const auto& c : curves) {
        if (!by_battery.count(c.battery_id)) batteries.push_back(c.battery_id);
        by_battery[c.battery_id].push_back(c);
    }
    const SearchSpace space = SearchSpace::defaults();
    RunDirectory dir(out);
    const std::string runs_path = dir.file("inferences", "runs.csv");
    auto runs_csv = open_csv(runs_path);
    runs_csv << "battery,cycle,restart,seed,mse,status,filtered,evaluations,eta_Dp,eta_Dn,eta_Gp,eta_cmaxp\n";
    const std::string summary_path = dir.file("inferences", "summary.csv");
    {
        std::ofstream(summary_path) << "battery,cycle,factor,min,median,max,mse_median,capacity_Ah\n";
    }
    json warnings = json::array();
    if (curves.empty()) {
        warnings.push_back("no discharge curves in input");
        log(ctx, "warning: no discharge curves in input");
    }
    for (const auto& b : batteries) {
        log(ctx, "inferring " + std::to_string(by_battery[b].size()) + " cycles of " + b);
        const auto res = infer_battery(by_battery[b], ModelConfig::defaults(), OcpPair::defaults(), *surface.model,
                                       protocol, space, surface.id);
        const std::string stem = b.empty() ? "battery" : b;
        const std::string jp = dir.file("inferences", stem + ".json");
        write_json(jp, res.to_json());
        m.outputs.push_back(dir.entry(jp));
        const std::string cp = dir.file("inferences", stem + ".csv");
        res.write_csv(cp);
        m.outputs.push_back(dir.entry(cp));
        {
            std::ifstream in(cp);
            std::ofstream app(summary_path, std::ios::app);
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) app << line << '\n';
        }
        for (const auto& ci : res.cycles) write_runs_csv(runs_csv, b + "," + std::to_string(ci.cycle) + ",", ci, nullptr, space);
        for (const auto& w : res.warnings) {
            warnings.push_back(b + ": " + w);
            log(ctx, "warning: " + b + ": " + w);
        }
    }
    runs_csv.close();
    m.outputs.push_back(dir.entry(runs_path));
    m.outputs.push_back(dir.entry(summary_path));
    const std::string rep = dir.file("reports", "infer.json");
    write_json(rep, {{"batteries", batteries}, {"basis_id", surface.id}, {"warnings", warnings}});
    m.outputs.push_back(dir.entry(rep));
    return m;
}

// sensitivity --------------------------------------------------------------------

RunManifest sensitivity(const json& cfg, const std::string& out, const CommandContext& ctx) {
    check_keys(cfg, {"basis", "state", "perturbations", "samples"}, "sensitivity");
    const std::string basis = basis_arg(cfg, "sensitivity");
    const ScalingFactors state = scaling_factors_from_json(get<json>(cfg, "state", "sensitivity"));
    const auto changes = read_doubles(cfg, "perturbations", {-0.1, 0.1}, "sensitivity");
    const int samples = get_or(cfg, "samples", 601, "sensitivity");
    if (samples < kMinObservedSamples) throw ConfigError("sensitivity.samples must be >= 10");

    RunManifest m;
    m.command = "sensitivity";
    m.config = {{"basis", basis}, {"state", factors_json(state)}, {"perturbations", changes}, {"samples", samples}};
    auto surface = load_surface(basis, m);
    VoltageSynthesizer synth(ModelConfig::defaults(), OcpPair::defaults(), *surface.model, uniform_times(samples));
    const auto res = sensitivity_scan(state, changes, synth);

    RunDirectory dir(out);
    const std::string cp = dir.file("reports", "sensitivity_curves.csv");
    {
        auto csv = open_csv(cp);
        csv << "factor,relative_change,time_s,voltage_V\n";
        for (std::size_t i = 0; i < res.reference_curve.size(); ++i)
            csv << "reference,0," << res.reference_curve.t[i] << ',' << res.reference_curve.v[i] << '\n';
        for (const auto& c : res.curves)
            for (std::size_t i = 0; i < c.curve.size(); ++i)
                csv << factor_spec(c.factor).name << ',' << c.relative_change << ',' << c.curve.t[i] << ','
                    << c.curve.v[i] << '\n';
    }
    m.outputs.push_back(dir.entry(cp));
    const std::string dp = dir.file("reports", "sensitivity_max_dv.csv");
    {
        auto csv = open_csv(dp);
        csv << "factor,relative_change,factor_value,max_abs_dV\n";
        for (const auto& c : res.curves)
            csv << factor_spec(c.factor).name << ',' << c.relative_change << ',' << c.factors[c.factor] << ','
                << c.max_deviation << '\n';
    }
    m.outputs.push_back(dir.entry(dp));
    for (const auto& spec : kFactorSpecs)
        log(ctx, std::string(spec.name) + ": max |dV| " + std::to_string(res.max_deviation(spec.factor)) + " V");
    return m;
}

// validate ---------------------------------------------------------------------

json default_cases() {
    json cases = json::array();
    const std::array<std::pair<const char*, ScalingFactors>, 3> states{{
        {"early", ScalingFactors(2.5, 0.25, 2.5, 1.0)},
        {"middle", ScalingFactors(1.5, 0.1, 3.5, 1.0)},
        {"late", ScalingFactors(0.3, 0.03, 3.5, 1.0)},
    }};
    for (const auto& [name, f] : states) cases.push_back({{"name", name}, {"factors", factors_json(f)}});
    return cases;
}

RunManifest validate(const json& cfg, const std::string& out, const CommandContext& ctx) {
    check_keys(cfg, {"basis", "cases", "protocol", "samples"}, "validate");
    const std::string basis = basis_arg(cfg, "validate");
    json protocol_j = cfg.value("protocol", json::object());
    if (!protocol_j.contains("restarts")) protocol_j["restarts"] = 100;
    const InverseProtocol protocol = read_protocol(protocol_j, ctx);
    const int samples = get_or(cfg, "samples", 601, "validate");
    json cases = cfg.contains("cases") ? cfg.at("cases") : default_cases();
    if (!cases.is_array() || cases.empty()) throw ConfigError("validate.cases: expected a non-empty array");
    std::vector<std::pair<std::string, ScalingFactors>> parsed;
    json cases_norm = json::array();
    for (const auto& c : cases) {
        check_keys(c, {"name", "factors"}, "validate.cases");
        parsed.emplace_back(get<std::string>(c, "name", "validate.cases"),
                            scaling_factors_from_json(get<json>(c, "factors", "validate.cases")));
        cases_norm.push_back({{"name", parsed.back().first}, {"factors", factors_json(parsed.back().second)}});
    }

    RunManifest m;
    m.command = "validate";
    m.seeds = {{"seed", protocol.seed}};
    m.config = {{"basis", basis}, {"cases", cases_norm}, {"protocol", protocol.to_json()}, {"samples", samples}};
    auto surface = load_surface(basis, m);
    const auto config = ModelConfig::defaults();
    const auto ocp = OcpPair::defaults();
    const ReferenceSurface truth_surface;
    const SearchSpace space = SearchSpace::defaults();

    RunDirectory dir(out);
    const std::string curves_p = dir.file("reports", "validate_curves.csv");
    const std::string runs_p = dir.file("reports", "validate_runs.csv");
    const std::string rho_p = dir.file("reports", "validate_spearman.csv");
    const std::string sum_p = dir.file("reports", "validate_summary.csv");
    auto curves_csv = open_csv(curves_p);
    auto runs_csv = open_csv(runs_p);
    auto rho_csv = open_csv(rho_p);
    auto sum_csv = open_csv(sum_p);
    curves_csv << "case,time_s,voltage_V\n";
    runs_csv << "case,restart,seed,mse,status,filtered,evaluations,eta_Dp,eta_Dn,eta_Gp,eta_cmaxp,normalized_error\n";
    rho_csv << "case,threshold_percent,count,spearman_rho\n";
    sum_csv << "case,factor,truth,min,median,max,bracketed,mse_at_truth\n";

    for (const auto& [name, truth] : parsed) {
        log(ctx, "validating " + name + " with " + std::to_string(protocol.restarts) + " restarts");
        auto observed = synthesize_vt(truth, config, ocp, truth_surface, uniform_times(samples), true).curve;
        observed.battery_id = name;
        for (std::size_t i = 0; i < observed.size(); ++i)
            curves_csv << name << ',' << observed.t[i] << ',' << observed.v[i] << '\n';
        const InverseObjective objective(config, ocp, *surface.model, observed);
        const double at_truth = objective(truth).total();
        const CycleInference ci = infer_cycle(objective, space, protocol, 0);
        write_runs_csv(runs_csv, name + ",", ci, &truth, space);
        if (static_cast<int>(ci.runs.size()) >= 20) {
            for (const auto& row : correlation_diagnostics(ci.runs, truth, space)) {
                rho_csv << name << ',' << row.threshold << ',' << row.count << ',';
                if (row.rho) rho_csv << *row.rho;
                else rho_csv << "undefined";
                rho_csv << '\n';
            }
        }
        for (std::size_t f = 0; f < kFactorCount; ++f) {
            const auto& s = ci.summary[f];
            const double t = truth.values()[f];
            sum_csv << name << ',' << kFactorSpecs[f].name << ',' << t << ',' << s.min << ',' << s.median << ','
                    << s.max << ',' << (s.min <= t && t <= s.max) << ',' << at_truth << '\n';
        }
    }
    curves_csv.close();
    runs_csv.close();
    rho_csv.close();
    sum_csv.close();
    for (const auto& p : {curves_p, runs_p, rho_p, sum_p}) m.outputs.push_back(dir.entry(p));
    return m;
}

}  // namespace

RunManifest run_command(const std::string& command, const json& config, const std::string& out,
                        const CommandContext& ctx) {
    RunManifest m;
    if (command == "gen-tasks") m = gen_tasks(config, out, ctx);
    else if (command == "train-meta") m = train_meta(config, out, ctx);
    else if (command == "benchmark") m = benchmark(config, out, ctx);
    else if (command == "synthesize") m = synthesize(config, out, ctx);
    else if (command == "ingest") m = ingest(config, out, ctx);
    else if (command == "infer") m = infer(config, out, ctx);
    else if (command == "sensitivity") m = sensitivity(config, out, ctx);
    else if (command == "validate") m = validate(config, out, ctx);
    else throw ConfigError("unknown command '" + command + "'");
    m.write((fs::path(out) / "manifest.json").string());
    return m;
}

RerunReport rerun(const std::string& manifest_path, const std::string& out, const CommandContext& ctx) {
    RerunReport rep;
    rep.original = RunManifest::load(manifest_path);
    if (fs::exists(out) && fs::equivalent(fs::path(out), fs::path(manifest_path).parent_path()))
        throw ConfigError("rerun output directory must differ from the original run directory");
    rep.replay = run_command(rep.original.command, rep.original.config, out, ctx);
    std::map<std::string, std::string> replayed;
    for (const auto& e : rep.replay.outputs) replayed[e.path] = e.sha256;
    for (const auto& e : rep.original.outputs) {
        if (!e.primary) continue;
        auto it = replayed.find(e.path);
        if (it == replayed.end() || it->second != e.sha256) rep.mismatched.push_back(e.path);
    }
    return rep;
}

}  // namespace pineapple::cli
