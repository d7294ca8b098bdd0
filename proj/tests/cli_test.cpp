#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "lvmselect/cli.hpp"

using namespace lvmselect;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("lvmselect_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
        unsetenv("LVMSELECT_SEED");
    }
    void TearDown() override {
        unsetenv("LVMSELECT_SEED");
        fs::remove_all(dir);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    std::string make_data(std::size_t n = 80, std::size_t d = 6, std::size_t k = 2) {
        const std::string p = path("data.csv");
        const Outcome r = run({"gen", "--n", std::to_string(n), "--d", std::to_string(d), "--k-true", std::to_string(k),
                           "--seed", "1", "--out", p});
        EXPECT_EQ(r.code, 0) << r.err;
        return p;
    }
    fs::path dir;
};

}  // namespace

TEST_F(CliTest, GenWritesHeaderAndRows) {
    const Outcome r = run({"gen", "--n", "5", "--d", "3", "--k-true", "1", "--seed", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x1,x2,x3");
    std::size_t rows = 0;
    while (std::getline(in, line)) rows += !line.empty();
    EXPECT_EQ(rows, 5u);
}

TEST_F(CliTest, GenIsReproducible) {
    EXPECT_EQ(run({"gen", "--n", "5", "--seed", "3"}).out, run({"gen", "--n", "5", "--seed", "3"}).out);
    EXPECT_NE(run({"gen", "--n", "5", "--seed", "3"}).out, run({"gen", "--n", "5", "--seed", "4"}).out);
}

TEST_F(CliTest, EnvironmentSeedIsTheFallback) {
    const std::string explicit_seed = run({"gen", "--n", "4", "--seed", "7"}).out;
    setenv("LVMSELECT_SEED", "7", 1);
    EXPECT_EQ(run({"gen", "--n", "4"}).out, explicit_seed);
    EXPECT_NE(run({"gen", "--n", "4", "--seed", "8"}).out, explicit_seed);
    setenv("LVMSELECT_SEED", "abc", 1);
    EXPECT_EQ(run({"gen", "--n", "4"}).code, 1);
}

TEST_F(CliTest, FitEmitsReportJson) {
    const std::string data = make_data();
    for (const char* method : {"gfab", "em", "bicem", "vb1", "vb2"}) {
        const Outcome r = run({"fit", "--method", method, "--k", "4", "--data", data, "--seed", "0", "--max-iter", "200"});
        ASSERT_EQ(r.code, 0) << method << ": " << r.err;
        const auto j = nlohmann::json::parse(r.out);
        EXPECT_EQ(j.at("model"), "bpca");
        EXPECT_EQ(j.at("k_init"), 4);
        EXPECT_FALSE(j.at("objective_trajectory").empty());
    }
    const Outcome g = run({"fit", "--model", "gmm", "--k", "3", "--data", data});
    ASSERT_EQ(g.code, 0) << g.err;
    EXPECT_EQ(nlohmann::json::parse(g.out).at("method"), "FABGMM");
}

TEST_F(CliTest, UsageErrorsExitOne) {
    const std::string data = make_data();
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    EXPECT_EQ(run({"gen", "--bogus", "1"}).code, 1);
    EXPECT_EQ(run({"gen", "--n", "ten"}).code, 1);
    EXPECT_EQ(run({"gen", "--n", "-3"}).code, 1);
    EXPECT_EQ(run({"fit"}).code, 1);
    EXPECT_EQ(run({"fit", "--data", data, "--method", "magic"}).code, 1);
    EXPECT_EQ(run({"fit", "--data", data, "--k", "99"}).code, 1);
    EXPECT_EQ(run({"fit", "--data", data, "--tol", "0"}).code, 1);
    EXPECT_EQ(run({"demo-skew", "--pi", "1.5"}).code, 1);
    EXPECT_EQ(run({"sweep", "--n", "50", "60"}).code, 1);
}

TEST_F(CliTest, RuntimeFailuresExitTwo) {
    const Outcome r = run({"fit", "--data", path("missing.csv")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("missing.csv"), std::string::npos);
}

TEST_F(CliTest, HelpExitsZeroForEverySubcommand) {
    EXPECT_EQ(run({"--help"}).code, 0);
    for (const char* sub : {"gen", "fit", "sweep", "demo-skew", "check"}) {
        const Outcome r = run({sub, "--help"});
        EXPECT_EQ(r.code, 0) << sub;
        EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
    }
    EXPECT_NE(run({"fit", "--help"}).out.find("--method"), std::string::npos);
}

TEST_F(CliTest, ConfigFileAndOverride) {
    {
        std::ofstream cfg(path("gen.json"));
        cfg << R"({"n": 6, "d": 4, "k_true": 2, "seed": 5})";
    }
    const Outcome a = run({"gen", "--config", path("gen.json")});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, run({"gen", "--n", "6", "--d", "4", "--k-true", "2", "--seed", "5"}).out);
    const Outcome b = run({"gen", "--config", path("gen.json"), "--seed", "6"});
    EXPECT_EQ(b.out, run({"gen", "--n", "6", "--d", "4", "--k-true", "2", "--seed", "6"}).out);
    {
        std::ofstream cfg(path("bad.json"));
        cfg << R"({"n": 6, "colour": "blue"})";
    }
    const Outcome c = run({"gen", "--config", path("bad.json")});
    EXPECT_EQ(c.code, 1);
    EXPECT_NE(c.err.find("colour"), std::string::npos);
}

TEST_F(CliTest, FailedRunLeavesNoPartialOutput) {
    const std::string target = path("report.json");
    EXPECT_EQ(run({"fit", "--data", path("missing.csv"), "--out", target}).code, 2);
    EXPECT_FALSE(fs::exists(target));
    EXPECT_FALSE(fs::exists(target + ".tmp"));
}

TEST_F(CliTest, SweepSingleSizeToStdout) {
    const Outcome r = run({"sweep", "--n", "40", "--d", "5", "--k-true", "2", "--k-max", "3", "--seed", "0", "1",
                       "--method", "gfab", "em", "--max-iter", "200", "--warmup", "10"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "method,K,seed,objective,selected_k,iterations,wall_ms,status");
    std::size_t rows = 0;
    while (std::getline(in, line)) rows += !line.empty();
    EXPECT_EQ(rows, 2u * (1 + 2));
}

TEST_F(CliTest, SweepSeveralSizesWritesOneFileEach) {
    const std::string out = path("sweep.csv");
    const Outcome r = run({"sweep", "--n", "40", "50", "--d", "5", "--k-true", "2", "--k-max", "3", "--seed", "0",
                       "--method", "vb1", "--max-iter", "100", "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("sweep_n40.csv")));
    EXPECT_TRUE(fs::exists(path("sweep_n50.csv")));
    EXPECT_EQ(read_reports(path("sweep_n50.csv")).size(), 2u);
}

TEST_F(CliTest, DemoSkewTable) {
    const Outcome r = run({"demo-skew", "--n", "15", "--pi", "0.9"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "n,tau,q_binomial,penalty,skewed");
    std::size_t rows = 0;
    while (std::getline(in, line)) rows += !line.empty();
    EXPECT_EQ(rows, 16u);
}

TEST_F(CliTest, CheckPasses) {
    const Outcome r = run({"check", "--k", "3"});
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, BinaryExitCodes) {
    const std::string bin = LVMSELECT_CLI_PATH;
    auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status(bin + " --help"), 0);
    EXPECT_EQ(status(bin + " gen --n 3"), 0);
    EXPECT_EQ(status(bin + " gen --nope"), 1);
    EXPECT_EQ(status(bin + " fit --data " + path("missing.csv")), 2);
}
