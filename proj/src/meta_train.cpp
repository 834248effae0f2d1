#include "pineapple/meta_train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <iomanip>

#include "pineapple/errors.hpp"
#include "pineapple/evolution.hpp"
#include "pineapple/parallel.hpp"

namespace pineapple {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Task population

void TaskRanges::validate() const {
    auto check = [](double lo, double hi, const char* name, bool positive) {
        if (!std::isfinite(lo) || !std::isfinite(hi) || (positive && lo <= 0.0))
            throw ConfigError(std::string("task range ") + name + " must be finite and positive");
        if (lo > hi) throw ConfigError(std::string("task range ") + name + " is inverted");
    };
    check(dp_lower, dp_upper, "D_p", true);
    check(gp_lower, gp_upper, "G_p", true);
    check(dn_lower, dn_upper, "D_n", true);
}

void TaskCounts::validate() const {
    if (train_positive < 1 || train_negative < 1) throw ConfigError("need at least one training task per electrode");
    if (test_positive < 0 || test_negative < 0) throw ConfigError("test counts must be >= 0");
}

std::vector<double> sample_log_uniform(double lower, double upper, int count, std::uint64_t seed) {
    if (!(lower > 0.0) || lower > upper) throw ConfigError("log-uniform range must satisfy 0 < lower <= upper");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(std::log10(lower), std::log10(upper));
    std::vector<double> out(count);
    for (auto& v : out) v = std::clamp(std::pow(10.0, u(rng)), lower, upper);
    return out;
}

namespace {

std::vector<double> sample_uniform(double lower, double upper, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lower, upper);
    std::vector<double> out(count);
    for (auto& v : out) v = std::clamp(u(rng), lower, upper);
    return out;
}

enum Stream : std::uint64_t { kTrainPositive = 1, kTrainNegative, kTestPositive, kTestNegative };

std::vector<MetaTask> make_tasks(const CellParameters& base, ElectrodeKind kind, const std::vector<double>& d,
                                 const std::vector<double>& g, int first_id) {
    std::vector<MetaTask> out;
    const ElectrodeParams& p = base.electrode(kind);
    for (std::size_t i = 0; i < d.size(); ++i) {
        MetaTask t;
        t.id = first_id + static_cast<int>(i);
        t.kind = kind;
        t.diffusion = d[i];
        t.geometric = g.empty() ? p.geometric : g[i];
        const double flux = electrode_surface_flux(kind, t.geometric, base.constants);
        t.task = nondimensionalize(t.diffusion, p.radius, p.initial_concentration, flux, base.constants.horizon);
        out.push_back(std::move(t));
    }
    return out;
}

nlohmann::json task_json(const MetaTask& t, const std::string& label_path) {
    return {{"id", t.id},           {"kind", std::string(to_string(t.kind))},
            {"diffusion", t.diffusion}, {"geometric", t.geometric},
            {"alpha", t.task.alpha},    {"beta", t.task.beta},
            {"label", label_path}};
}

std::string label_name(const char* split, int id) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "labels/%s_%03d.csv", split, id);
    return buf;
}

std::string task_name(const char* split, int id) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "tasks/%s_%03d.json", split, id);
    return buf;
}

}  // namespace

TaskSet sample_tasks(const ModelConfig& config, const TaskRanges& ranges, const TaskCounts& counts,
                     std::uint64_t seed, int jobs) {
    ranges.validate();
    counts.validate();
    const CellParameters base = config.baseline();

    TaskSet set;
    set.seed = seed;
    set.ranges = ranges;
    auto positive = [&](int n, Stream s, int first) {
        const auto d = sample_log_uniform(ranges.dp_lower, ranges.dp_upper, n, derive_seed(seed, {s, 0}));
        const auto g = sample_uniform(ranges.gp_lower, ranges.gp_upper, n, derive_seed(seed, {s, 1}));
        return make_tasks(base, ElectrodeKind::Positive, d, g, first);
    };
    auto negative = [&](int n, Stream s, int first) {
        const auto d = sample_log_uniform(ranges.dn_lower, ranges.dn_upper, n, derive_seed(seed, {s, 0}));
        return make_tasks(base, ElectrodeKind::Negative, d, {}, first);
    };

    int id = 0;
    for (auto& t : positive(counts.train_positive, kTrainPositive, id)) set.train.push_back(std::move(t));
    id += counts.train_positive;
    for (auto& t : negative(counts.train_negative, kTrainNegative, id)) set.train.push_back(std::move(t));
    id += counts.train_negative;
    for (auto& t : positive(counts.test_positive, kTestPositive, id)) set.test.push_back(std::move(t));
    id += counts.test_positive;
    for (auto& t : negative(counts.test_negative, kTestNegative, id)) set.test.push_back(std::move(t));

    std::vector<MetaTask*> all;
    for (auto& t : set.train) all.push_back(&t);
    for (auto& t : set.test) all.push_back(&t);
    parallel_for(static_cast<int>(all.size()), jobs, [&](int i) { all[i]->label = label_field(all[i]->task); });
    return set;
}

MetaTask make_task(const ModelConfig& config, ElectrodeKind kind, double diffusion, double geometric, int id) {
    const CellParameters base = config.baseline();
    std::vector<double> g;
    if (geometric > 0.0) g.push_back(geometric);
    MetaTask t = std::move(make_tasks(base, kind, {diffusion}, g, id).front());
    t.label = label_field(t.task);
    return t;
}

nlohmann::json TaskSet::to_json() const {
    nlohmann::json j;
    j["format"] = "pineapple-task-set";
    j["format_version"] = 1;
    j["seed"] = seed;
    j["ranges"] = {{"dp", {ranges.dp_lower, ranges.dp_upper}},
                   {"gp", {ranges.gp_lower, ranges.gp_upper}},
                   {"dn", {ranges.dn_lower, ranges.dn_upper}}};
    j["train"] = nlohmann::json::array();
    j["test"] = nlohmann::json::array();
    for (const auto& t : train) j["train"].push_back(task_json(t, label_name("train", t.id)));
    for (const auto& t : test) j["test"].push_back(task_json(t, label_name("test", t.id)));
    return j;
}

void TaskSet::save(const std::string& dir) const {
    fs::create_directories(fs::path(dir) / "labels");
    fs::create_directories(fs::path(dir) / "tasks");
    {
        std::ofstream out(fs::path(dir) / "tasks.json");
        if (!out) throw FormatError("cannot write " + (fs::path(dir) / "tasks.json").string());
        out << to_json().dump(2) << '\n';
    }
    auto write = [&](const char* split, const MetaTask& t) {
        const fs::path path = fs::path(dir) / task_name(split, t.id);
        std::ofstream out(path);
        if (!out) throw FormatError("cannot write " + path.string());
        auto j = task_json(t, label_name(split, t.id));
        j["split"] = split;
        out << j.dump(2) << '\n';
        write_label_csv((fs::path(dir) / label_name(split, t.id)).string(), t.label);
    };
    for (const auto& t : train) write("train", t);
    for (const auto& t : test) write("test", t);
}

TaskSet TaskSet::load(const std::string& dir) {
    const fs::path path = fs::path(dir) / "tasks.json";
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "pineapple-task-set" || j.value("format_version", 0) != 1)
        throw FormatError(path.string() + ": not a version-1 task set");
    TaskSet set;
    try {
        set.seed = j.at("seed").get<std::uint64_t>();
        const auto& r = j.at("ranges");
        set.ranges.dp_lower = r.at("dp").at(0);
        set.ranges.dp_upper = r.at("dp").at(1);
        set.ranges.gp_lower = r.at("gp").at(0);
        set.ranges.gp_upper = r.at("gp").at(1);
        set.ranges.dn_lower = r.at("dn").at(0);
        set.ranges.dn_upper = r.at("dn").at(1);
        auto read = [&](const nlohmann::json& arr, std::vector<MetaTask>& out) {
            for (const auto& e : arr) {
                MetaTask t;
                t.id = e.at("id");
                t.kind = electrode_kind_from_string(e.at("kind").get<std::string>());
                t.diffusion = e.at("diffusion");
                t.geometric = e.at("geometric");
                t.task = {e.at("alpha").get<double>(), e.at("beta").get<double>()};
                t.label = read_label_csv((fs::path(dir) / e.at("label").get<std::string>()).string());
                out.push_back(std::move(t));
            }
        };
        read(j.at("train"), set.train);
        read(j.at("test"), set.test);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return set;
}

// ---------------------------------------------------------------------------
// Genome

double BlockDistribution::spread_r() const { return std::exp(log_spread_r); }
double BlockDistribution::spread_t() const { return std::exp(log_spread_t); }
double BlockDistribution::spread_bias() const { return std::exp(log_spread_bias); }

LearningHyper DistributionGenome::hyper() const {
    LearningHyper h;
    h.pi = std::pow(10.0, log10_lambda[0]);
    h.pde = std::pow(10.0, log10_lambda[1]);
    h.ic = std::pow(10.0, log10_lambda[2]);
    h.bc = std::pow(10.0, log10_lambda[3]);
    return h;
}

Eigen::VectorXd DistributionGenome::encode() const {
    Eigen::VectorXd x(kDimension);
    int k = 0;
    for (const auto& b : blocks) {
        x[k++] = b.mean_r;
        x[k++] = b.log_spread_r;
        x[k++] = b.mean_t;
        x[k++] = b.log_spread_t;
        x[k++] = b.mean_bias;
        x[k++] = b.log_spread_bias;
    }
    for (double v : log10_lambda) x[k++] = v;
    return x;
}

DistributionGenome DistributionGenome::decode(const Eigen::VectorXd& x, std::uint64_t seed, const LambdaBounds& bounds) {
    if (x.size() != kDimension) throw ConfigError("genome vector has wrong length");
    DistributionGenome g;
    g.seed = seed;
    int k = 0;
    for (auto& b : g.blocks) {
        b.mean_r = x[k++];
        b.log_spread_r = x[k++];
        b.mean_t = x[k++];
        b.log_spread_t = x[k++];
        b.mean_bias = x[k++];
        b.log_spread_bias = x[k++];
    }
    for (int i = 0; i < 4; ++i) g.log10_lambda[i] = std::clamp(x[k++], bounds.lower[i], bounds.upper[i]);
    return g;
}

DistributionGenome DistributionGenome::initial(std::uint64_t seed) {
    DistributionGenome g;
    g.seed = seed;
    for (auto& b : g.blocks) {
        b.log_spread_r = std::log(3.0);
        b.log_spread_t = std::log(3.0);
        b.log_spread_bias = 0.0;
    }
    return g;
}

nlohmann::json DistributionGenome::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["blocks"] = nlohmann::json::array();
    const char* names[kActivationBlocks] = {"sin", "silu", "tanh"};
    for (int i = 0; i < kActivationBlocks; ++i) {
        const auto& b = blocks[i];
        j["blocks"].push_back({{"activation", names[i]},
                               {"mean_r", b.mean_r},
                               {"log_spread_r", b.log_spread_r},
                               {"mean_t", b.mean_t},
                               {"log_spread_t", b.log_spread_t},
                               {"mean_bias", b.mean_bias},
                               {"log_spread_bias", b.log_spread_bias}});
    }
    j["log10_lambda"] = {{"pi", log10_lambda[0]}, {"pde", log10_lambda[1]}, {"ic", log10_lambda[2]}, {"bc", log10_lambda[3]}};
    return j;
}

DistributionGenome DistributionGenome::from_json(const nlohmann::json& j) {
    DistributionGenome g;
    try {
        g.seed = j.at("seed").get<std::uint64_t>();
        const auto& blocks = j.at("blocks");
        if (blocks.size() != kActivationBlocks) throw FormatError("genome needs exactly three blocks");
        for (int i = 0; i < kActivationBlocks; ++i) {
            const auto& e = blocks.at(i);
            auto& b = g.blocks[i];
            b.mean_r = e.at("mean_r");
            b.log_spread_r = e.at("log_spread_r");
            b.mean_t = e.at("mean_t");
            b.log_spread_t = e.at("log_spread_t");
            b.mean_bias = e.at("mean_bias");
            b.log_spread_bias = e.at("log_spread_bias");
        }
        const auto& l = j.at("log10_lambda");
        g.log10_lambda = {l.at("pi").get<double>(), l.at("pde").get<double>(), l.at("ic").get<double>(),
                          l.at("bc").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("genome: ") + e.what());
    }
    return g;
}

std::array<int, kActivationBlocks> block_sizes(int hidden_width) {
    if (hidden_width < kActivationBlocks) throw ConfigError("hidden width must be >= 3");
    std::array<int, kActivationBlocks> sizes;
    for (int i = 0; i < kActivationBlocks; ++i)
        sizes[i] = hidden_width / kActivationBlocks + (i < hidden_width % kActivationBlocks ? 1 : 0);
    return sizes;
}

FeatureBasis materialize(const DistributionGenome& genome, int hidden_width, BasisProvenance provenance) {
    const auto sizes = block_sizes(hidden_width);
    std::mt19937_64 rng(genome.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Activation acts[kActivationBlocks] = {Activation::Sin, Activation::Silu, Activation::Tanh};

    std::vector<Activation> tags;
    Eigen::VectorXd a(hidden_width), b(hidden_width), c(hidden_width);
    int j = 0;
    for (int blk = 0; blk < kActivationBlocks; ++blk) {
        const auto& d = genome.blocks[blk];
        for (int k = 0; k < sizes[blk]; ++k, ++j) {
            tags.push_back(acts[blk]);
            const double za = normal(rng), zb = normal(rng), zc = normal(rng);
            a[j] = d.mean_r + d.spread_r() * za;
            b[j] = d.mean_t + d.spread_t() * zb;
            c[j] = d.mean_bias + d.spread_bias() * zc;
        }
    }
    if (provenance.seed == 0) provenance.seed = genome.seed;
    return FeatureBasis(std::move(tags), std::move(a), std::move(b), std::move(c), genome.hyper(), std::move(provenance));
}

// ---------------------------------------------------------------------------
// Fitness

double FitnessRecord::recompute(const FitnessWeights& w) const {
    double s = 0.0;
    for (const auto& t : tasks) s += w.lse * t.lse + w.mse * t.mse + t.penalty;
    return s;
}

std::vector<Point> label_points(int n_t, int n_r) {
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(n_t) * n_r);
    for (int i = 0; i < n_t; ++i)
        for (int j = 0; j < n_r; ++j) pts.push_back({static_cast<double>(j) / (n_r - 1), static_cast<double>(i) / (n_t - 1)});
    return pts;
}

namespace {

Eigen::VectorXd flatten_rows(const Eigen::MatrixXd& m) {
    Eigen::VectorXd v(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = m(i, j);
    return v;
}

}  // namespace

FitnessRecord evaluate_genome(const DistributionGenome& genome, const std::vector<const MetaTask*>& subset,
                              const EvaluationSetup& setup) {
    if (subset.empty()) throw ConfigError("evaluate_genome needs a non-empty task subset");
    FitnessRecord rec;
    auto penalize_all = [&] {
        rec.tasks.clear();
        for (const auto* t : subset) rec.tasks.push_back({t->id, 0.0, 0.0, kConditioningPenalty});
        rec.loss = rec.recompute(setup.weights);
        return rec;
    };

    std::shared_ptr<const FeatureBasis> basis;
    std::optional<PreparedSystem> prepared;
    Eigen::MatrixXd phi;
    try {
        basis = std::make_shared<const FeatureBasis>(materialize(genome, setup.hidden_width));
        prepared.emplace(basis, setup.colloc);
        phi = basis->values(label_points());
        if (!phi.allFinite()) return penalize_all();
    } catch (const Error&) {
        return penalize_all();
    }

    for (const auto* t : subset) {
        TaskFitness tf;
        tf.task_id = t->id;
        try {
            const Eigen::VectorXd w = prepared->solve_weights(t->task);
            tf.lse = prepared->lse(t->task, w);
            tf.mse = (phi * w - flatten_rows(t->label.values)).squaredNorm();
            if (!std::isfinite(tf.lse) || !std::isfinite(tf.mse)) tf = {t->id, 0.0, 0.0, kConditioningPenalty};
        } catch (const ConditioningError&) {
            tf = {t->id, 0.0, 0.0, kConditioningPenalty};
        }
        rec.tasks.push_back(tf);
    }
    rec.loss = rec.recompute(setup.weights);
    return rec;
}

std::vector<double> held_out_errors(std::shared_ptr<const FeatureBasis> basis, const std::vector<MetaTask>& tasks,
                                    const CollocationSet& colloc) {
    const PreparedSystem prepared(basis, colloc);
    std::vector<double> errors;
    for (const auto& t : tasks) {
        const auto sol = prepared.solve(t.task);
        errors.push_back(relative_l2(sol.eval_grid(t.label.r, t.label.t), t.label.values));
    }
    return errors;
}

// ---------------------------------------------------------------------------
// Outer loop

void MetaTrainConfig::validate() const {
    if (population < 8) throw ConfigError("meta-training population must be >= 8");
    if (generations < 10) throw ConfigError("meta-training needs >= 10 generations");
    if (subset_size < 1) throw ConfigError("subset_size must be >= 1");
    if (hidden_width < kActivationBlocks) throw ConfigError("hidden_width must be >= 3");
    if (es != "diag-nes" && es != "cmaes") throw ConfigError("es must be 'diag-nes' or 'cmaes'");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (colloc_n_t < 3 || colloc_n_r < 3) throw ConfigError("collocation grid must be at least 3 x 3");
    for (int i = 0; i < 4; ++i)
        if (lambda_bounds.lower[i] > lambda_bounds.upper[i]) throw ConfigError("lambda bounds inverted");
}

MetaTrainConfig MetaTrainConfig::from_json(const nlohmann::json& j) {
    MetaTrainConfig c;
    static const std::set<std::string> known{"population", "generations", "subset_size", "hidden_width", "seed",
                                             "es", "patience", "jobs", "colloc_n_t", "colloc_n_r"};
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) throw ConfigError("unknown meta-training key '" + k + "'");
    try {
        c.population = j.value("population", c.population);
        c.generations = j.value("generations", c.generations);
        c.subset_size = j.value("subset_size", c.subset_size);
        c.hidden_width = j.value("hidden_width", c.hidden_width);
        c.seed = j.value("seed", c.seed);
        c.es = j.value("es", c.es);
        c.patience = j.value("patience", c.patience);
        c.jobs = j.value("jobs", c.jobs);
        c.colloc_n_t = j.value("colloc_n_t", c.colloc_n_t);
        c.colloc_n_r = j.value("colloc_n_r", c.colloc_n_r);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("meta-training config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json MetaTrainConfig::to_json() const {
    return {{"population", population}, {"generations", generations}, {"subset_size", subset_size},
            {"hidden_width", hidden_width}, {"seed", seed},           {"es", es},
            {"patience", patience},     {"colloc_n_t", colloc_n_t}, {"colloc_n_r", colloc_n_r}};
}

std::vector<int> generation_subset(std::uint64_t seed, int generation, int n_train, int subset_size) {
    std::vector<int> idx(n_train);
    std::iota(idx.begin(), idx.end(), 0);
    const int k = std::min(subset_size, n_train);
    std::mt19937_64 rng(derive_seed(seed, {0x5b, static_cast<std::uint64_t>(generation)}));
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, n_train - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    return idx;
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Eigen::VectorXd initial_sigmas() {
    Eigen::VectorXd s(DistributionGenome::kDimension);
    for (int blk = 0; blk < kActivationBlocks; ++blk) {
        for (int k = 0; k < 6; ++k) s[blk * 6 + k] = (k % 2 == 0) ? 0.5 : 0.3;  // means, log-spreads
    }
    for (int i = 0; i < 4; ++i) s[kActivationBlocks * 6 + i] = 0.5;  // decades
    return s;
}

}  // namespace

MetaTrainResult run_meta_training(const MetaTrainConfig& config, const std::vector<MetaTask>& train,
                                  const std::string& run_id, const GenerationCallback& on_generation) {
    config.validate();
    if (train.empty()) throw ConfigError("meta-training needs at least one training task");

    EvaluationSetup setup;
    setup.hidden_width = config.hidden_width;
    setup.colloc = CollocationSet::tensor(config.colloc_n_t, config.colloc_n_r);

    const std::uint64_t genome_seed = derive_seed(config.seed, {0xba515});
    const DistributionGenome start = DistributionGenome::initial(genome_seed);

    std::unique_ptr<EvolutionStrategy> es;
    const std::uint64_t es_seed = derive_seed(config.seed, {0xe5});
    if (config.es == "cmaes") {
        es = std::make_unique<Cmaes>(start.encode(), initial_sigmas(), CmaesOptions{config.population, es_seed});
    } else {
        es = std::make_unique<SeparableNes>(start.encode(), initial_sigmas(), SnesOptions{config.population, es_seed});
    }

    // Subset fitness is not comparable across generations, so the elite is
    // ranked on the whole training set.
    std::vector<const MetaTask*> all_tasks;
    for (const auto& t : train) all_tasks.push_back(&t);

    MetaTrainResult result{materialize(start, config.hidden_width, {run_id, genome_seed}), start, 0.0, {}, {}, "ok"};
    result.best_fitness = evaluate_genome(start, all_tasks, setup).loss;

    int since_improvement = 0;
    for (int gen = 0; gen < config.generations; ++gen) {
        const auto subset_idx = generation_subset(config.seed, gen, static_cast<int>(train.size()), config.subset_size);
        std::vector<const MetaTask*> subset;
        for (int i : subset_idx) subset.push_back(&train[i]);
        result.subsets.push_back(subset_idx);

        const auto candidates = es->ask();
        std::vector<DistributionGenome> genomes;
        for (const auto& x : candidates) genomes.push_back(DistributionGenome::decode(x, genome_seed, config.lambda_bounds));
        std::vector<FitnessRecord> records(candidates.size());
        parallel_for(static_cast<int>(candidates.size()), config.jobs, [&](int i) {
            records[i] = evaluate_genome(genomes[i], subset, setup);
            records[i].genome_id = i;
            records[i].generation = gen;
        });

        std::vector<double> fitness;
        GenerationStats stats;
        stats.generation = gen;
        for (const auto& r : records) {
            fitness.push_back(r.loss);
            bool pen = false;
            for (const auto& t : r.tasks) pen = pen || t.penalty > 0.0;
            stats.penalized += pen ? 1 : 0;
        }
        es->tell(candidates, fitness);

        const int leader = argsort(fitness).front();
        const double leader_full = evaluate_genome(genomes[leader], all_tasks, setup).loss;
        if (leader_full < result.best_fitness) {
            result.best_fitness = leader_full;
            result.best_genome = genomes[leader];
            since_improvement = 0;
        } else {
            ++since_improvement;
        }

        stats.best = result.best_fitness;
        stats.mean = std::accumulate(fitness.begin(), fitness.end(), 0.0) / fitness.size();
        stats.median = median_of(fitness);
        result.history.push_back(stats);
        if (on_generation) on_generation(stats);

        if (since_improvement >= config.patience) {
            result.status = "stalled";
            break;
        }
    }

    result.basis = materialize(result.best_genome, config.hidden_width, {run_id, genome_seed});
    return result;
}

void write_fitness_history_csv(const std::string& path, const std::vector<GenerationStats>& history) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "generation,best,mean,median\n" << std::setprecision(17);
    for (const auto& h : history) out << h.generation << ',' << h.best << ',' << h.mean << ',' << h.median << '\n';
}

}  // namespace pineapple
