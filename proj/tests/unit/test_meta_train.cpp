#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "pineapple/errors.hpp"
#include "pineapple/meta_train.hpp"

using namespace pineapple;

namespace {

const TaskSet& small_set() {
    static const TaskSet set = sample_tasks(ModelConfig::defaults(), {}, {6, 4, 3, 2}, 17);
    return set;
}

std::vector<const MetaTask*> pointers(const std::vector<MetaTask>& tasks) {
    std::vector<const MetaTask*> out;
    for (const auto& t : tasks) out.push_back(&t);
    return out;
}

EvaluationSetup small_setup() {
    EvaluationSetup s;
    s.hidden_width = 96;
    s.colloc = CollocationSet::tensor(31, 33);
    return s;
}

MetaTrainConfig small_config() {
    MetaTrainConfig c;
    c.population = 8;
    c.generations = 10;
    c.subset_size = 4;
    c.hidden_width = 48;
    c.colloc_n_t = 21;
    c.colloc_n_r = 16;
    c.seed = 3;
    return c;
}

}  // namespace

TEST(TaskSampling, LogUniformBoundsAndHistogram) {
    const int n = 5000, bins = 10;
    const auto d = sample_log_uniform(3.9e-15, 3.9e-13, n, 99);
    std::vector<int> count(bins, 0);
    for (double v : d) {
        ASSERT_GE(v, 3.9e-15);
        ASSERT_LE(v, 3.9e-13);
        const double u = (std::log10(v) - std::log10(3.9e-15)) / 2.0;
        ++count[std::min(bins - 1, static_cast<int>(u * bins))];
    }
    double chi2 = 0.0;
    const double expected = static_cast<double>(n) / bins;
    for (int c : count) chi2 += (c - expected) * (c - expected) / expected;
    // chi-square 0.99 quantile with 9 degrees of freedom
    EXPECT_LT(chi2, 21.666);
}

TEST(TaskSampling, CountsAndIdsHonored) {
    const auto set = sample_tasks(ModelConfig::defaults(), {}, {}, 1);
    std::map<std::pair<bool, ElectrodeKind>, int> counts;
    std::set<int> ids;
    for (const auto& t : set.train) {
        ++counts[{true, t.kind}];
        ids.insert(t.id);
    }
    for (const auto& t : set.test) {
        ++counts[{false, t.kind}];
        ids.insert(t.id);
    }
    EXPECT_EQ((counts[{true, ElectrodeKind::Positive}]), 60);
    EXPECT_EQ((counts[{true, ElectrodeKind::Negative}]), 40);
    EXPECT_EQ((counts[{false, ElectrodeKind::Positive}]), 40);
    EXPECT_EQ((counts[{false, ElectrodeKind::Negative}]), 10);
    EXPECT_EQ(ids.size(), 150u);
    for (const auto& t : set.train) {
        EXPECT_EQ(t.label.values.rows(), 61);
        EXPECT_EQ(t.label.values.cols(), 64);
        if (t.kind == ElectrodeKind::Positive) {
            EXPECT_GE(t.geometric, 1.01);
            EXPECT_LE(t.geometric, 4.03);
            EXPECT_GT(t.task.beta, 0.0);
        } else {
            EXPECT_GE(t.diffusion, 3.9e-16);
            EXPECT_LT(t.task.beta, 0.0);
        }
    }
}

TEST(TaskSampling, DeterministicAndIndependentOfJobs) {
    const auto a = sample_tasks(ModelConfig::defaults(), {}, {3, 2, 2, 1}, 5, 1);
    const auto b = sample_tasks(ModelConfig::defaults(), {}, {3, 2, 2, 1}, 5, 2);
    ASSERT_EQ(a.train.size(), b.train.size());
    EXPECT_EQ(a.to_json(), b.to_json());
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].label.values, b.train[i].label.values);
    const auto c = sample_tasks(ModelConfig::defaults(), {}, {3, 2, 2, 1}, 6, 1);
    EXPECT_NE(a.to_json(), c.to_json());
}

TEST(TaskSampling, InvertedRangeIsConfigError) {
    TaskRanges r;
    r.gp_lower = 5.0;
    EXPECT_THROW(sample_tasks(ModelConfig::defaults(), r, {1, 1, 0, 0}, 1), ConfigError);
    EXPECT_THROW(sample_tasks(ModelConfig::defaults(), {}, {0, 1, 0, 0}, 1), ConfigError);
}

TEST(TaskSet, SaveLoadRoundTrip) {
    const auto dir = testing::TempDir() + "/taskset_rt";
    std::filesystem::remove_all(dir);
    small_set().save(dir);
    EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir + "/tasks"), {}), 15);
    EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir + "/labels"), {}), 15);
    const auto back = TaskSet::load(dir);
    EXPECT_EQ(back.to_json(), small_set().to_json());
    EXPECT_LE((back.test[1].label.values - small_set().test[1].label.values).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Genome, EncodeDecodeRoundTrip) {
    auto g = DistributionGenome::initial(8);
    g.blocks[1].mean_t = 0.4;
    g.log10_lambda[1] = 0.5;
    const auto back = DistributionGenome::decode(g.encode(), 8);
    EXPECT_EQ(back.encode(), g.encode());
    EXPECT_EQ(g.encode().size(), DistributionGenome::kDimension);
    const auto j = DistributionGenome::from_json(g.to_json());
    EXPECT_EQ(j.encode(), g.encode());
    EXPECT_EQ(j.seed, 8u);
}

TEST(Genome, LambdaGenesClamped) {
    Eigen::VectorXd x = DistributionGenome::initial(1).encode();
    x.tail(4) << -30.0, 9.0, -9.0, 1.0;
    const auto g = DistributionGenome::decode(x, 1);
    EXPECT_EQ(g.log10_lambda[0], -12.0);
    EXPECT_EQ(g.log10_lambda[1], 3.0);
    EXPECT_EQ(g.log10_lambda[2], -2.0);
    EXPECT_EQ(g.log10_lambda[3], 1.0);
    EXPECT_GE(g.hyper().pi, 0.0);
    EXPECT_GT(g.hyper().pde, 0.0);
}

TEST(Genome, MaterializeDeterministic) {
    const auto g = DistributionGenome::initial(21);
    const auto a = materialize(g, 100), b = materialize(g, 100);
    EXPECT_EQ(a.weight_r(), b.weight_r());
    EXPECT_EQ(a.bias(), b.bias());
    EXPECT_EQ(block_sizes(100), (std::array<int, 3>{34, 33, 33}));
    EXPECT_EQ(a.tags()[33], Activation::Sin);
    EXPECT_EQ(a.tags()[34], Activation::Silu);
    EXPECT_EQ(a.tags()[99], Activation::Tanh);
    const auto c = materialize(DistributionGenome::initial(22), 100);
    EXPECT_NE(a.weight_r(), c.weight_r());
}

TEST(Fitness, WeightBookkeeping) {
    auto setup = small_setup();
    setup.weights = {0.1, 0.0};
    const std::vector<const MetaTask*> one{&small_set().train[0]};
    const auto rec = evaluate_genome(DistributionGenome::initial(1), one, setup);
    ASSERT_EQ(rec.tasks.size(), 1u);
    EXPECT_DOUBLE_EQ(rec.loss, 0.1 * rec.tasks[0].lse);
}

TEST(Fitness, DecompositionAndDeterminism) {
    const auto setup = small_setup();
    const auto subset = pointers(small_set().train);
    const auto a = evaluate_genome(DistributionGenome::initial(4), subset, setup);
    const auto b = evaluate_genome(DistributionGenome::initial(4), subset, setup);
    EXPECT_EQ(a.loss, b.loss);
    double sum = 0.0;
    for (const auto& t : a.tasks) sum += 0.1 * t.lse + 1.0 * t.mse + t.penalty;
    EXPECT_NEAR(a.loss, sum, 1e-10 * std::abs(sum));
    EXPECT_NEAR(a.recompute(), a.loss, 1e-10 * std::abs(a.loss));
}

TEST(Fitness, DegenerateGenomeIsWorse) {
    DistributionGenome flat = DistributionGenome::initial(4);
    for (auto& b : flat.blocks) b = {0.0, -20.0, 0.0, -20.0, 0.0, -20.0};
    const auto setup = small_setup();
    const auto subset = pointers(small_set().train);
    const auto degenerate = evaluate_genome(flat, subset, setup);
    const auto normal = evaluate_genome(DistributionGenome::initial(4), subset, setup);
    EXPECT_GT(degenerate.loss, normal.loss);
}

TEST(Fitness, EmptySubsetRejected) {
    EXPECT_THROW(evaluate_genome(DistributionGenome::initial(1), {}, small_setup()), ConfigError);
}

TEST(Subsets, WithoutReplacementAndCoverage) {
    const int n = 100, k = 16;
    const int window = 4 * ((n + k - 1) / k);
    std::vector<int> touched(n, 0);
    for (int gen = 0; gen < 10 * window; ++gen) {
        const auto s = generation_subset(1, gen, n, k);
        EXPECT_EQ(std::set<int>(s.begin(), s.end()).size(), static_cast<std::size_t>(k));
        for (int i : s) ++touched[i];
    }
    // on average at least once per window for every task
    for (int c : touched) EXPECT_GE(c, 10);
    EXPECT_EQ(generation_subset(1, 3, n, k), generation_subset(1, 3, n, k));
    EXPECT_NE(generation_subset(1, 3, n, k), generation_subset(1, 4, n, k));
}

TEST(MetaTraining, ElitistTraceAndDeterminism) {
    const auto cfg = small_config();
    const auto a = run_meta_training(cfg, small_set().train, "t");
    ASSERT_EQ(a.history.size(), 10u);
    for (std::size_t i = 1; i < a.history.size(); ++i) EXPECT_LE(a.history[i].best, a.history[i - 1].best);
    auto cfg2 = cfg;
    cfg2.jobs = 2;
    const auto b = run_meta_training(cfg2, small_set().train, "t");
    EXPECT_EQ(a.basis.weight_r(), b.basis.weight_r());
    EXPECT_EQ(a.basis.hyper().pi, b.basis.hyper().pi);
    EXPECT_EQ(a.best_fitness, b.best_fitness);
    EXPECT_EQ(a.basis.provenance().run_id, "t");
}

TEST(MetaTraining, CmaesOptionRuns) {
    auto cfg = small_config();
    cfg.es = "cmaes";
    cfg.generations = 10;
    const auto r = run_meta_training(cfg, small_set().train);
    EXPECT_EQ(r.history.size(), 10u);
    EXPECT_TRUE(std::isfinite(r.best_fitness));
}

TEST(MetaTraining, PatienceStalls) {
    auto cfg = small_config();
    cfg.patience = 1;
    cfg.generations = 40;
    const auto r = run_meta_training(cfg, small_set().train);
    if (r.history.size() < 40u) EXPECT_EQ(r.status, "stalled");
}

TEST(MetaTrainConfig, Validation) {
    EXPECT_THROW(MetaTrainConfig::from_json({{"population", 4}}), ConfigError);
    EXPECT_THROW(MetaTrainConfig::from_json({{"generations", 5}}), ConfigError);
    EXPECT_THROW(MetaTrainConfig::from_json({{"popsize", 32}}), ConfigError);
    EXPECT_THROW(MetaTrainConfig::from_json({{"es", "adam"}}), ConfigError);
    const auto c = MetaTrainConfig::from_json({{"population", 12}, {"es", "cmaes"}});
    EXPECT_EQ(MetaTrainConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(HeldOut, ErrorsPerTask) {
    const auto basis = std::make_shared<const FeatureBasis>(materialize(DistributionGenome::initial(1), 96));
    const auto errs = held_out_errors(basis, small_set().test, CollocationSet::tensor(31, 33));
    ASSERT_EQ(errs.size(), small_set().test.size());
    for (double e : errs) {
        EXPECT_GE(e, 0.0);
        EXPECT_LT(e, 1.0);
    }
}

TEST(History, CsvHeader) {
    const auto path = testing::TempDir() + "/hist.csv";
    write_fitness_history_csv(path, {{0, 2.0, 3.0, 2.5, 0}, {1, 1.5, 2.0, 1.8, 1}});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "generation,best,mean,median");
}
