// pineapple: meta-learned surrogate battery model, command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "pineapple/core_model.hpp"
#include "pineapple/errors.hpp"

namespace {

using nlohmann::json;
using namespace pineapple;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

json read_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

/// "eta_Dp,eta_Dn,eta_Gp,eta_cmaxp" or a JSON file holding the factor object.
json parse_factors(const std::string& arg) {
    if (arg.find(',') == std::string::npos) return read_config(arg);
    std::vector<double> v;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("factor list '" + arg + "': '" + item + "' is not a number");
        }
    }
    if (v.size() != kFactorCount) throw ConfigError("factor list '" + arg + "' needs 4 values");
    json j;
    for (std::size_t i = 0; i < kFactorCount; ++i) j[std::string(kFactorSpecs[i].name)] = v[i];
    return j;
}

struct Common {
    std::string out;
    std::string config;
    int jobs = 0;
    bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--out", c.out, "Run directory (default $PINEAPPLE_RUN_DIR/<command>)");
    sub->add_option("--jobs", c.jobs, "Worker threads, 0 = logical cores")->check(CLI::NonNegativeNumber);
    sub->add_flag("--quiet", c.quiet, "No progress output");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-learned surrogate single-particle battery model"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    Common common;
    json cfg;
    std::string command;

    // gen-tasks
    auto* gen = app.add_subcommand("gen-tasks", "Sample simulation tasks and solve their reference labels");
    add_common(gen, common);
    std::uint64_t seed = 1;
    gen->add_option("--config", common.config, "JSON config: ranges, counts, model");
    gen->add_option("--seed", seed, "Master seed");

    // train-meta
    auto* train = app.add_subcommand("train-meta", "Meta-train the hidden-layer distribution");
    add_common(train, common);
    std::string tasks;
    train->add_option("--tasks", tasks, "gen-tasks run directory")->required();
    train->add_option("--config", common.config, "JSON meta-training config");
    std::optional<std::uint64_t> train_seed;
    std::optional<int> population, generations, subset, width, patience;
    std::optional<std::string> es;
    train->add_option("--seed", train_seed, "Master seed");
    train->add_option("--population", population);
    train->add_option("--generations", generations);
    train->add_option("--subset-size", subset);
    train->add_option("--hidden-width", width);
    train->add_option("--patience", patience);
    train->add_option("--es", es)->check(CLI::IsMember({"diag-nes", "cmaes"}));

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "Accuracy and time of the basis against solver meshes");
    add_common(bench, common);
    std::string basis, task_file;
    std::vector<int> meshes{16, 32, 64, 128, 256};
    int repeats = 25;
    bench->add_option("--basis", basis, "Basis file")->required();
    bench->add_option("--task", task_file, "Task JSON (tasks/<split>_<id>.json from gen-tasks)")->required();
    bench->add_option("--meshes", meshes, "Solver meshes")->delimiter(',');
    bench->add_option("--repeats", repeats, "Timing repeats");

    // synthesize
    auto* synth = app.add_subcommand("synthesize", "Synthetic discharge curves and cycling CSV");
    add_common(synth, common);
    std::string synth_basis = "reference", battery_id = "synthetic";
    std::vector<std::string> states;
    double noise_mv = 0.0;
    int samples = 601;
    synth->add_option("--basis", synth_basis, "Basis file, or 'reference' for the reference solver");
    synth->add_option("--state", states, "Factors eta_Dp,eta_Dn,eta_Gp,eta_cmaxp, one cycle each")->required();
    synth->add_option("--battery-id", battery_id);
    synth->add_option("--noise-mv", noise_mv, "Uniform noise half-width, mV");
    synth->add_option("--samples", samples, "Uniform samples over [0, T]");
    synth->add_option("--seed", seed, "Noise seed");

    // ingest
    auto* ing = app.add_subcommand("ingest", "Ingest cycling CSV and extract discharge curves");
    add_common(ing, common);
    std::string input, schema;
    std::optional<std::string> ingest_battery;
    ing->add_option("--in", input, "Cycling CSV")->required();
    ing->add_option("--schema", schema, "JSON schema mapping");
    ing->add_option("--battery-id", ingest_battery);

    // infer
    auto* inf = app.add_subcommand("infer", "Infer scaling factors for every discharge curve");
    add_common(inf, common);
    std::string curves;
    std::optional<int> restarts, inf_generations, inf_population, max_samples;
    std::optional<std::uint64_t> inf_seed;
    inf->add_option("--basis", basis, "Basis file, or 'reference'")->required();
    inf->add_option("--curves", curves, "Curves .json or .csv (from ingest)")->required();
    inf->add_option("--config", common.config, "JSON protocol config");
    inf->add_option("--restarts", restarts);
    inf->add_option("--generations", inf_generations);
    inf->add_option("--population", inf_population);
    inf->add_option("--max-samples", max_samples);
    inf->add_option("--seed", inf_seed);

    // sensitivity
    auto* sens = app.add_subcommand("sensitivity", "One-at-a-time factor perturbations");
    add_common(sens, common);
    std::string state;
    std::vector<double> perturbations{-0.1, 0.1};
    sens->add_option("--basis", basis, "Basis file, or 'reference'")->required();
    sens->add_option("--state", state, "eta_Dp,eta_Dn,eta_Gp,eta_cmaxp or a JSON file")->required();
    sens->add_option("--perturbations", perturbations, "Relative changes")->delimiter(',');
    sens->add_option("--samples", samples);

    // validate
    auto* val = app.add_subcommand("validate", "Inverse inference on synthetic curves with known factors");
    add_common(val, common);
    std::string synthetic_set;
    val->add_option("--basis", basis, "Basis file, or 'reference'")->required();
    val->add_option("--synthetic-set", synthetic_set, "JSON array of {name, factors}; default early/middle/late");
    val->add_option("--config", common.config, "JSON protocol config");
    val->add_option("--restarts", restarts);
    val->add_option("--generations", inf_generations);
    val->add_option("--population", inf_population);
    val->add_option("--seed", inf_seed);

    // rerun
    auto* re = app.add_subcommand("rerun", "Replay a run manifest and compare primary outputs");
    std::string manifest;
    re->add_option("--manifest", manifest, "manifest.json of the original run")->required();
    re->add_option("--out", common.out, "New run directory")->required();
    re->add_option("--jobs", common.jobs)->check(CLI::NonNegativeNumber);
    re->add_flag("--quiet", common.quiet);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) failing = sub;
        std::cerr << failing->help();
        return kExitUsage;
    }

    const cli::CommandContext ctx{common.jobs, common.quiet};
    try {
        auto* sub = app.get_subcommands().front();
        command = sub->get_name();
        if (command == "rerun") {
            const auto rep = cli::rerun(manifest, common.out, ctx);
            if (rep.mismatched.empty()) {
                std::cout << "reproduced " << rep.original.command << ": all primary outputs identical\n";
                return 0;
            }
            for (const auto& p : rep.mismatched) std::cerr << "differs: " << p << '\n';
            return kExitRuntime;
        }

        cfg = read_config(common.config);
        if (command == "gen-tasks") {
            cfg["seed"] = seed;
        } else if (command == "train-meta") {
            cfg = {{"tasks", tasks}, {"meta", cfg}};
            auto& meta = cfg["meta"];
            if (train_seed) meta["seed"] = *train_seed;
            if (population) meta["population"] = *population;
            if (generations) meta["generations"] = *generations;
            if (subset) meta["subset_size"] = *subset;
            if (width) meta["hidden_width"] = *width;
            if (patience) meta["patience"] = *patience;
            if (es) meta["es"] = *es;
            meta.erase("jobs");
        } else if (command == "benchmark") {
            const json task = read_config(task_file);
            cfg = {{"basis", basis},
                   {"task", {{"alpha", task.value("alpha", 0.0)}, {"beta", task.value("beta", 0.0)}}},
                   {"meshes", meshes},
                   {"repeats", repeats}};
            if (!task.contains("alpha") || !task.contains("beta"))
                throw ConfigError(task_file + ": task needs alpha and beta");
        } else if (command == "synthesize") {
            json st = json::array();
            for (std::size_t k = 0; k < states.size(); ++k)
                st.push_back({{"cycle", static_cast<int>(k) + 1}, {"factors", parse_factors(states[k])}});
            cfg = {{"basis", synth_basis}, {"battery_id", battery_id}, {"states", st},
                   {"samples", samples},   {"noise_v", noise_mv * 1e-3}, {"seed", seed}};
        } else if (command == "ingest") {
            cfg = {{"input", input}, {"schema", read_config(schema)}};
            if (ingest_battery) cfg["schema"]["battery_id"] = *ingest_battery;
        } else if (command == "infer" || command == "validate") {
            json protocol = cfg;
            if (restarts) protocol["restarts"] = *restarts;
            if (inf_generations) protocol["generations"] = *inf_generations;
            if (inf_population) protocol["population"] = *inf_population;
            if (inf_seed) protocol["seed"] = *inf_seed;
            if (max_samples) protocol["max_samples"] = *max_samples;
            cfg = {{"basis", basis}, {"protocol", protocol}};
            if (command == "infer") {
                cfg["curves"] = curves;
            } else {
                if (!synthetic_set.empty()) {
                    std::ifstream in(synthetic_set);
                    if (!in) throw ConfigError("cannot read " + synthetic_set);
                    try {
                        cfg["cases"] = json::parse(in);
                    } catch (const json::exception& e) {
                        throw ConfigError(synthetic_set + ": " + e.what());
                    }
                }
            }
        } else if (command == "sensitivity") {
            cfg = {{"basis", basis}, {"state", parse_factors(state)}, {"perturbations", perturbations},
                   {"samples", samples}};
        }
        const std::string out = common.out.empty() ? cli::default_out_dir(command) : common.out;
        cli::run_command(command, cfg, out, ctx);
        if (!common.quiet) std::cerr << "wrote " << out << "/manifest.json\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
