#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

namespace fs = std::filesystem;
using namespace fewent;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("fewent-cli-test-" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Run cli(const std::string& args) {
    const auto out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
    const std::string cmd =
        std::string("\"") + FEWENT_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string data(const std::string& rel) { return "\"" + std::string(FEWENT_DATA_DIR) + "/" + rel + "\""; }
std::string tmp(const std::string& name) { return "\"" + (scratch() / name).string() + "\""; }

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

// One small two_way checkpoint shared by the eval tests.
const std::string& checkpoint() {
    static const std::string path = [] {
        const auto r = cli("train --source " + data("synthetic/source.jsonl") + " --target-examples " +
                           data("synthetic/target_k10_seed42.jsonl") + " --m 5 --epochs 2 --d 8 --out " +
                           tmp("model.json"));
        EXPECT_EQ(r.code, 0) << r.err;
        return (scratch() / "model.json").string();
    }();
    return path;
}

}  // namespace

TEST(CliConvert, QaCounts) {
    const auto r = cli("convert qa --in " + data("qa_sample.jsonl") + " --out " + tmp("qa.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("entailment: 10, non-entailment: 30"), std::string::npos) << r.out;
    EXPECT_EQ(load_jsonl((scratch() / "qa.jsonl").string(), LabelScheme::TwoWay).size(), 40u);
}

TEST(CliConvert, CorefCounts) {
    const auto r = cli("convert coref --in " + data("coref_sample.tsv") + " --out " + tmp("coref.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_jsonl((scratch() / "coref.jsonl").string(), LabelScheme::TwoWay).size(), 8u);
}

TEST(CliConvert, EmptyInputWarnsButSucceeds) {
    std::ofstream(scratch() / "empty.jsonl").close();
    const auto r = cli("convert qa --in " + tmp("empty.jsonl") + " --out " + tmp("empty-out.jsonl"));
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("warning"), std::string::npos);
    EXPECT_NE(r.out.find("entailment: 0, non-entailment: 0"), std::string::npos);
}

TEST(CliConvert, MalformedInputFails) {
    std::ofstream(scratch() / "bad.jsonl") << "{\"item_id\":\"x\"}\n";
    const auto r = cli("convert qa --in " + tmp("bad.jsonl") + " --out " + tmp("bad-out.jsonl"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
}

TEST(CliSample, ThreeWayFiveShotIsFifteenPairsAndReproducible) {
    const std::string args = "sample --in " + data("synthetic/source.jsonl") + " --k 5 --seed 42 --scheme three_way --out ";
    ASSERT_EQ(cli(args + tmp("s1.jsonl")).code, 0);
    ASSERT_EQ(cli(args + tmp("s2.jsonl")).code, 0);
    EXPECT_EQ(count_lines(scratch() / "s1.jsonl"), 16u);  // header + 15 pairs
    EXPECT_EQ(slurp(scratch() / "s1.jsonl"), slurp(scratch() / "s2.jsonl"));
    std::ifstream in(scratch() / "s1.jsonl");
    EXPECT_EQ(read_example_set(in).flatten().size(), 15u);
}

TEST(CliSample, TooLargeKNamesTheClass) {
    const auto r = cli("sample --in " + data("synthetic/target_pool.jsonl") +
                       " --k 5000 --seed 1 --scheme two_way --out " + tmp("big.jsonl"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("entailment"), std::string::npos) << r.err;
}

TEST(CliTrain, MissingSettingsReportedTogether) {
    const auto r = cli("train --source " + data("synthetic/source.jsonl"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("target_examples"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("out"), std::string::npos) << r.err;
}

TEST(CliTrain, UnknownConfigKeyRejected) {
    std::ofstream(scratch() / "cfg.json") << R"({"epochs": 1, "learning_rat": 0.1})";
    const auto r = cli("train --config " + tmp("cfg.json"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("learning_rat"), std::string::npos) << r.err;
}

TEST(CliTrain, ZeroLearningRateLeavesCheckpointAtInit) {
    const std::string base = "train --source " + data("synthetic/source.jsonl") + " --target-examples " +
                             data("synthetic/target_k10_seed42.jsonl") + " --m 5 --d 8 --lr 0 --out ";
    ASSERT_EQ(cli(base + tmp("lr0a.json") + " --epochs 1").code, 0);
    ASSERT_EQ(cli(base + tmp("lr0b.json") + " --epochs 2").code, 0);
    const auto a = load_checkpoint((scratch() / "lr0a.json").string());
    const auto b = load_checkpoint((scratch() / "lr0b.json").string());
    const auto pa = a.model->parameters(), pb = b.model->parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
}

TEST(CliTrain, WritesLogWithHeader) {
    checkpoint();
    const auto log = scratch() / "model.json.log.jsonl";
    ASSERT_TRUE(fs::exists(log));
    std::ifstream in(log);
    std::string first;
    std::getline(in, first);
    const auto meta = nlohmann::json::parse(first).at("_meta");
    EXPECT_EQ(meta.at("seed"), 42);
    EXPECT_TRUE(meta.contains("config_hash"));
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_DOUBLE_EQ(j.at("l").get<double>(), j.at("l_S").get<double>() + j.at("l_T").get<double>());
        ++rows;
    }
    EXPECT_GT(rows, 0u);
}

TEST(CliEval, EntailReportsAccuracy) {
    const auto r = cli("eval --checkpoint \"" + checkpoint() + "\" --test " + data("synthetic/target_test.jsonl") +
                       " --out " + tmp("preds.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("accuracy: "), std::string::npos);
    EXPECT_EQ(count_lines(scratch() / "preds.jsonl"), 401u);
}

TEST(CliEval, SchemeMismatchFails) {
    const auto r = cli("eval --checkpoint \"" + checkpoint() + "\" --test " + data("synthetic/source.jsonl"));
    EXPECT_NE(r.code, 0);
    EXPECT_FALSE(r.err.empty());
}

TEST(CliEval, QaAndCorefModes) {
    auto r = cli("eval --checkpoint \"" + checkpoint() + "\" --mode qa --test " + data("qa_sample.jsonl") + " --out " +
                 tmp("qa-preds.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("accuracy: "), std::string::npos);
    EXPECT_EQ(count_lines(scratch() / "qa-preds.jsonl"), 11u);
    r = cli("eval --checkpoint \"" + checkpoint() + "\" --mode coref --test " + data("coref_sample.tsv"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("masculine F1: "), std::string::npos);
    EXPECT_NE(r.out.find("feminine F1: "), std::string::npos);
}

TEST(CliBenchmark, SingleSystemSingleK) {
    const auto r = cli("benchmark --systems majority --ks 1 --seeds 1 2 --out " + tmp("bench"));
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(scratch() / "bench.csv");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0].rfind("# {", 0), 0u);
    EXPECT_EQ(lines[1], csv_header());
    EXPECT_EQ(lines[2].rfind("majority,1,accuracy,", 0), 0u);
    EXPECT_TRUE(fs::exists(scratch() / "bench.txt"));
}

TEST(CliBenchmark, UnknownSystemFails) {
    const auto r = cli("benchmark --systems nope --ks 1 --seeds 1 --out " + tmp("bench-bad"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("nope"), std::string::npos);
}

TEST(Cli, NoSubcommandFails) { EXPECT_NE(cli("").code, 0); }
