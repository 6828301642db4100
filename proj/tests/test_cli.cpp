// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "test_util.hpp"
#include "ukast/config.hpp"
#include "ukast/data.hpp"

using namespace ukast;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(l);
    return out;
}

std::string manifest_value(const std::filesystem::path& run_dir, const std::string& key) {
    for (const auto& l : lines(read_file(run_dir / "manifest.txt")))
        if (l.rfind(key + " = ", 0) == 0) return l.substr(key.size() + 3);
    return "";
}

class CliTest : public ::testing::Test {
   protected:
    static void SetUpTestSuite() {
        root_ = new std::filesystem::path(ukast::testing::scratch_dir("cli"));
        const auto r = run({"synth-data", "--count", "20", "--test-count", "4", "--size", "32", "--seed", "3", "--out",
                            (*root_ / "data").string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    static void TearDownTestSuite() { delete root_; }

    static std::filesystem::path dir(const std::string& name) { return *root_ / name; }
    static std::string data() { return dir("data").string(); }
    static std::vector<std::string> train_args(const std::string& out) {
        return {"train", "--data", data(), "--set", "model.preset=tiny", "--set", "train.epochs=1", "--quiet",
                "--out", dir(out).string()};
    }

    static std::filesystem::path* root_;
};

std::filesystem::path* CliTest::root_ = nullptr;

}  // namespace

TEST_F(CliTest, SynthDataWritesLoadableDataset) {
    const auto d = load_dataset(data());
    EXPECT_EQ(d.train.size(), 20u);
    EXPECT_EQ(d.test.size(), 4u);
    EXPECT_EQ(d.seed, 3u);
    EXPECT_EQ(d.train[5].image, generate_sample(d.spec, 3, 5).image);
}

TEST_F(CliTest, NoSubcommandIsUsageError) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"bogus"}).code, 2);
}

TEST_F(CliTest, MissingDataDirExitsTwoWithPath) {
    const auto missing = dir("nowhere").string();
    const auto r = run({"train", "--data", missing, "--quiet"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST_F(CliTest, FractionTrainsOnNestedSubset) {
    auto args = train_args("frac10");
    args.insert(args.end(), {"--fraction", "0.10"});
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    std::string expect;
    for (auto i : fraction_ids(20, 0.10, 3)) expect += (expect.empty() ? "" : ",") + std::to_string(i);
    EXPECT_EQ(manifest_value(dir("frac10"), "data.train_ids"), expect);
    EXPECT_NE(r.out.find("2 training samples"), std::string::npos) << r.out;
}

TEST_F(CliTest, SameFlagsGiveIdenticalManifests) {
    ASSERT_EQ(run(train_args("det_a")).code, 0);
    ASSERT_EQ(run(train_args("det_b")).code, 0);
    EXPECT_EQ(read_file(dir("det_a") / "manifest.txt"), read_file(dir("det_b") / "manifest.txt"));
    auto seeded = train_args("det_c");
    seeded.insert(seeded.end(), {"--seed", "9"});
    ASSERT_EQ(run(seeded).code, 0);
    EXPECT_NE(read_file(dir("det_a") / "manifest.txt"), read_file(dir("det_c") / "manifest.txt"));
}

TEST_F(CliTest, FlagsOverrideSetOverrideConfigFile) {
    const auto cfg = dir("run.cfg");
    std::ofstream(cfg) << "# settings\nmodel.preset = tiny\ntrain.epochs = 1\ndata.fraction = 0.5\ntrain.lr = 1e-3\n";
    const auto file_only = run({"train", "--config", cfg.string(), "--data", data(), "--quiet", "--out",
                                dir("prec_file").string()});
    ASSERT_EQ(file_only.code, 0) << file_only.err;
    const auto ids = manifest_value(dir("prec_file"), "data.train_ids");
    EXPECT_EQ(std::count(ids.begin(), ids.end(), ','), 9);
    EXPECT_NE(file_only.out.find("10 training samples"), std::string::npos);
    EXPECT_EQ(manifest_value(dir("prec_file"), "train.lr"), "0.001");

    const auto with_set = run({"train", "--config", cfg.string(), "--set", "data.fraction=0.25", "--set",
                               "train.lr=5e-4", "--data", data(), "--quiet", "--out", dir("prec_set").string()});
    ASSERT_EQ(with_set.code, 0) << with_set.err;
    EXPECT_NE(with_set.out.find("5 training samples"), std::string::npos) << with_set.out;
    EXPECT_EQ(manifest_value(dir("prec_set"), "train.lr"), "5e-04");

    const auto with_flag = run({"train", "--config", cfg.string(), "--set", "data.fraction=0.25", "--fraction", "0.1",
                                "--data", data(), "--quiet", "--out", dir("prec_flag").string()});
    ASSERT_EQ(with_flag.code, 0) << with_flag.err;
    EXPECT_NE(with_flag.out.find("2 training samples"), std::string::npos) << with_flag.out;
}

TEST_F(CliTest, BadSettingsAreUsageErrors) {
    EXPECT_EQ(run({"train", "--data", data(), "--set", "model.preset=huge", "--quiet"}).code, 2);
    EXPECT_EQ(run({"train", "--data", data(), "--set", "novalue", "--quiet"}).code, 2);
    EXPECT_EQ(run({"train", "--config", dir("absent.cfg").string(), "--data", data()}).code, 2);
}

TEST_F(CliTest, EvalReportsDiceAndRejectsCorruptCheckpoint) {
    ASSERT_EQ(run(train_args("ev")).code, 0);
    const auto text = run({"eval", "--checkpoint", (dir("ev") / "last").string(), "--data", data()});
    ASSERT_EQ(text.code, 0) << text.err;
    EXPECT_NE(text.out.find("mean"), std::string::npos) << text.out;
    const auto csv = run({"eval", "--checkpoint", (dir("ev") / "last").string(), "--data", data(), "--format", "csv"});
    ASSERT_EQ(csv.code, 0);
    EXPECT_GE(lines(csv.out).size(), 2u);

    std::filesystem::copy(dir("ev") / "last", dir("ev_bad"), std::filesystem::copy_options::recursive);
    std::filesystem::remove(dir("ev_bad") / "model.cfg");
    const auto bad = run({"eval", "--checkpoint", dir("ev_bad").string(), "--data", data()});
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("manifest"), std::string::npos) << bad.err;
}

TEST_F(CliTest, FlopsPrintsRowsWithDeltas) {
    const auto r = run({"flops", "--variant", "swin+mlp,swin+grkan"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("ukast-cost-v1"), std::string::npos);
    const auto csv = run({"flops", "--variant", "swin+mlp,swin+grkan", "--format", "csv"});
    ASSERT_EQ(csv.code, 0);
    const auto rows = lines(csv.out);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], "variant,params,macs,gflops,delta_params,delta_gflops");
    EXPECT_EQ(rows[2].rfind("swin+grkan,", 0), 0u);
    EXPECT_NE(rows[2].find(",+1024,-"), std::string::npos) << rows[2];
    EXPECT_EQ(run({"flops"}).code, 0);
    EXPECT_EQ(run({"flops", "--variant", "vit+rc+grkan"}).code, 2);
}

TEST_F(CliTest, GradcheckScopes) {
    const auto r = run({"gradcheck", "--scope", "rational"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("pau"), std::string::npos) << r.out;
    EXPECT_EQ(run({"gradcheck", "--scope", "nonsense"}).code, 2);
}

TEST_F(CliTest, SweepCrossProductTable) {
    const std::vector<std::string> base{"sweep",  "--data",   data(), "--set", "model.preset=tiny", "--set",
                                        "train.epochs=1", "--variant", "swin+mlp+rc,swin+grkan+rc",
                                        "--fraction", "0.1,1.0", "--seed", "0"};
    auto csv_args = base;
    csv_args.insert(csv_args.end(), {"--format", "csv", "--out", dir("sweep").string()});
    const auto csv = run(csv_args);
    ASSERT_EQ(csv.code, 0) << csv.err;
    const auto rows = lines(csv.out);
    ASSERT_EQ(rows.size(), 4u) << csv.out;
    EXPECT_EQ(rows[0], "variant,10%,100%");
    EXPECT_EQ(rows[1].rfind("swin+mlp+rc,", 0), 0u);
    EXPECT_EQ(rows[2].rfind("swin+grkan+rc,", 0), 0u);
    EXPECT_EQ(rows[3].rfind("delta:swin+grkan+rc,", 0), 0u);
    for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(std::count(rows[i].begin(), rows[i].end(), ','), 2) << rows[i];

    // Delta column is grkan minus mlp, cell by cell.
    auto cells = [](const std::string& row) {
        std::vector<double> v;
        std::istringstream in(row.substr(row.find(',') + 1));
        for (std::string c; std::getline(in, c, ',');) v.push_back(std::stod(c));
        return v;
    };
    const auto mlp = cells(rows[1]), kan = cells(rows[2]), delta = cells(rows[3]);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(delta[j], kan[j] - mlp[j], 1.5e-4);

    const auto text = run(base);
    ASSERT_EQ(text.code, 0);
    EXPECT_EQ(lines(text.out).size(), 3u);
    EXPECT_EQ(run(base).out, text.out);
}

TEST_F(CliTest, SweepWithoutVariantsIsUsageError) {
    const auto r = run({"sweep", "--data", data(), "--variant", ""});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(run({"sweep", "--data", data(), "--variant", ",", "--fraction", "0.1"}).code, 2);
}
