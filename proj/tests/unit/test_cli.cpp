#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pineapple/data_pipeline.hpp"

using namespace pineapple;

namespace {

struct Outcome {
    int code = -1;
    std::string output;
};

Outcome run(const std::string& args) {
    const std::string cmd = std::string(PINEAPPLE_CLI) + " " + args + " 2>&1";
    Outcome o;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return o;
    std::array<char, 4096> buf{};
    while (fgets(buf.data(), buf.size(), pipe)) o.output += buf.data();
    const int status = pclose(pipe);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

std::string temp(const std::string& name) {
    const auto p = testing::TempDir() + "/cli_" + name;
    std::filesystem::remove_all(p);
    return p;
}

std::string write_config(const std::string& name, const nlohmann::json& j) {
    const auto path = temp(name);
    std::ofstream(path) << j.dump();
    return path;
}

}  // namespace

TEST(Cli, UnknownFlagExitsTwo) {
    const auto o = run("gen-tasks --bogus 3");
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.output.find("--bogus"), std::string::npos);
}

TEST(Cli, MissingSubcommandExitsTwo) { EXPECT_EQ(run("").code, 2); }

TEST(Cli, InvertedRangeNamesKey) {
    const auto cfg = write_config("inverted.json", {{"ranges", {{"gp", {4.0, 1.5}}}}});
    const auto o = run("gen-tasks --quiet --config " + cfg + " --out " + temp("inverted_out"));
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.output.find("ranges.gp"), std::string::npos) << o.output;
}

TEST(Cli, GenTasksReproducibleAndRerunMatches) {
    const auto cfg = write_config(
        "small.json", {{"counts", {{"train_positive", 2}, {"train_negative", 1}, {"test_positive", 1}, {"test_negative", 1}}}});
    const auto a = temp("gen_a"), b = temp("gen_b"), c = temp("gen_c");
    ASSERT_EQ(run("gen-tasks --quiet --seed 9 --config " + cfg + " --out " + a).code, 0);
    ASSERT_EQ(run("gen-tasks --quiet --seed 9 --config " + cfg + " --out " + b).code, 0);
    const auto ma = RunManifest::load(a + "/manifest.json");
    const auto mb = RunManifest::load(b + "/manifest.json");
    ASSERT_EQ(ma.outputs.size(), mb.outputs.size());
    ASSERT_EQ(ma.outputs.size(), 11u);
    for (std::size_t i = 0; i < ma.outputs.size(); ++i) {
        EXPECT_EQ(ma.outputs[i].path, mb.outputs[i].path);
        EXPECT_EQ(ma.outputs[i].sha256, mb.outputs[i].sha256);
    }
    const auto re = run("rerun --quiet --manifest " + a + "/manifest.json --out " + c);
    EXPECT_EQ(re.code, 0) << re.output;
    EXPECT_EQ(run("rerun --quiet --manifest " + a + "/manifest.json --out " + a).code, 2);
}

TEST(Cli, EmptyCurvesInferExitsZeroWithWarning) {
    const auto curves = write_config("empty_curves.json", curves_to_json({}));
    const auto out = temp("empty_infer");
    const auto o = run("infer --quiet --basis reference --curves " + curves + " --restarts 4 --out " + out);
    EXPECT_EQ(o.code, 0) << o.output;
    std::ifstream in(out + "/reports/infer.json");
    ASSERT_TRUE(in.good());
    const auto report = nlohmann::json::parse(in);
    EXPECT_FALSE(report.at("warnings").empty());
}

TEST(Cli, IngestWithoutDischargeWarns) {
    const auto csv = temp("rest.csv");
    {
        std::ofstream f(csv);
        f << "cycle,time_s,voltage_V,current_A\n";
        for (int i = 0; i < 30; ++i) f << "1," << 10 * i << ",3.6,0\n";
    }
    const auto out = temp("rest_out");
    const auto o = run("ingest --quiet --in " + csv + " --out " + out);
    EXPECT_EQ(o.code, 0) << o.output;
    std::ifstream in(out + "/reports/ingest.json");
    const auto report = nlohmann::json::parse(in);
    EXPECT_EQ(report.at("status"), "warning");
}

TEST(Cli, MissingColumnFailsCleanly) {
    const auto csv = temp("bad.csv");
    std::ofstream(csv) << "cycle,time_s,current_A\n1,0,-1\n";
    const auto o = run("ingest --quiet --in " + csv + " --out " + temp("bad_out"));
    EXPECT_NE(o.code, 0);
    EXPECT_NE(o.output.find("voltage_V"), std::string::npos) << o.output;
}
