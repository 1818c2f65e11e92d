// End-to-end tests of the ergolab CLI: exit codes, result documents, CSV
// artifacts, and determinism across runs and thread counts. The binary path
// comes from the ERGOLAB_BIN environment variable (set by ctest).

#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

CommandResult run_command(const std::string& cmd) {
    CommandResult res;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) return res;
    char buf[4096];
    while (fgets(buf, sizeof(buf), pipe)) res.output += buf;
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const char* bin = std::getenv("ERGOLAB_BIN");
        ASSERT_NE(bin, nullptr) << "ERGOLAB_BIN must point at the built CLI";
        bin_ = bin;
        dir_ = fs::temp_directory_path() /
               ("ergolab_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }

    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const std::string& name, const json& cfg) {
        const fs::path p = dir_ / name;
        std::ofstream out(p);
        out << cfg.dump(2);
        return p;
    }

    CommandResult ergolab(const std::string& args) { return run_command(bin_ + " " + args); }

    std::string bin_;
    fs::path dir_;
};

json exact_config(const fs::path& out_dir) {
    return {
        {"kind", "exact"},
        {"hamiltonian", {{"builder", "number"}, {"n", 3}}},
        {"state", {{"fixture", "appendixD_rho"}}},
        {"measurement",
         json::array({{{"fixture", "appendixD_entangled"}}, {{"fixture", "appendixD_product"}}})},
        {"output_dir", out_dir.string()},
    };
}

} // namespace

TEST_F(CliTest, FixturesCatalogIsNonEmptyAndLoadable) {
    const auto res = ergolab("fixtures");
    EXPECT_EQ(res.exit_code, 0);
    EXPECT_NE(res.output.find("eta4"), std::string::npos);
    EXPECT_NE(res.output.find("appendixD_rho"), std::string::npos);
    EXPECT_NE(res.output.find("two_qubit_blocks"), std::string::npos);
}

TEST_F(CliTest, ExactKindReportsTheBenchmarkValues) {
    const auto cfg = write_config("exact.json", exact_config(dir_ / "out"));
    const auto res = ergolab("run " + cfg.string());
    ASSERT_EQ(res.exit_code, 0) << res.output;

    const json doc = json::parse(slurp(dir_ / "out" / "result.json"));
    EXPECT_NEAR(doc["summary"]["energy"].get<double>(), 29.0 / 18.0, 1e-9);
    EXPECT_NEAR(doc["summary"]["ergotropy"].get<double>(), 17.0 / 18.0, 1e-9);
    EXPECT_NEAR(doc["summary"]["observational_ergotropy"]["appendixD_entangled"].get<double>(),
                1.0 / 3.0, 1e-9);
    EXPECT_NEAR(doc["summary"]["observational_ergotropy"]["appendixD_product"].get<double>(),
                2.0 / 9.0, 1e-9);
}

TEST_F(CliTest, ResultDocumentEchoesTheConfigByteForByte) {
    json cfg = exact_config(dir_ / "out");
    cfg["seed"] = 31415u;
    const auto path = write_config("exact.json", cfg);
    ASSERT_EQ(ergolab("run " + path.string()).exit_code, 0);
    const json doc = json::parse(slurp(dir_ / "out" / "result.json"));
    const json original = json::parse(slurp(path));
    EXPECT_EQ(doc["config"].dump(), original.dump());
}

TEST_F(CliTest, ValidateOnlyChecksTheConfig) {
    const auto cfg = write_config("exact.json", exact_config(dir_ / "out"));
    const auto res = ergolab("validate " + cfg.string());
    EXPECT_EQ(res.exit_code, 0) << res.output;
    EXPECT_FALSE(fs::exists(dir_ / "out" / "result.json"));
}

TEST_F(CliTest, ParseFailuresExitWithCode2) {
    // empty file
    const fs::path empty = dir_ / "empty.json";
    std::ofstream(empty).close();
    EXPECT_EQ(ergolab("run " + empty.string()).exit_code, 2);

    // malformed JSON
    const fs::path bad = dir_ / "bad.json";
    std::ofstream(bad) << "{ not json";
    EXPECT_EQ(ergolab("run " + bad.string()).exit_code, 2);

    // unknown field
    json cfg = exact_config(dir_ / "out");
    cfg["no_such_field"] = 1;
    const auto unknown = write_config("unknown.json", cfg);
    const auto res = ergolab("run " + unknown.string());
    EXPECT_EQ(res.exit_code, 2);
    EXPECT_NE(res.output.find("no_such_field"), std::string::npos);

    // missing required field
    json missing = exact_config(dir_ / "out");
    missing.erase("hamiltonian");
    EXPECT_EQ(ergolab("run " + write_config("missing.json", missing).string()).exit_code, 2);
}

TEST_F(CliTest, ValidationFailuresExitWithCode3) {
    json cfg = exact_config(dir_ / "out");
    cfg["state"] = {{"fixture", "no_such_state"}};
    EXPECT_EQ(ergolab("run " + write_config("f.json", cfg).string()).exit_code, 3);

    // dimension mismatch between state and hamiltonian
    json mismatch = exact_config(dir_ / "out");
    mismatch["hamiltonian"] = {{"builder", "number"}, {"n", 2}};
    EXPECT_EQ(ergolab("run " + write_config("m.json", mismatch).string()).exit_code, 3);

    // invalid inline density matrix (trace 2)
    json inline_bad = exact_config(dir_ / "out");
    inline_bad["hamiltonian"] = {{"builder", "number"}, {"n", 1}};
    inline_bad["measurement"] = json::array();
    inline_bad["state"] = {{"matrix", json::array({json::array({json::array({1.0, 0.0}),
                                                                json::array({0.0, 0.0})}),
                                                   json::array({json::array({0.0, 0.0}),
                                                                json::array({1.0, 0.0})})})}};
    EXPECT_EQ(ergolab("run " + write_config("i.json", inline_bad).string()).exit_code, 3);
}

TEST_F(CliTest, RuntimeFailuresExitWithCode4) {
    json cfg = exact_config(dir_ / "out");
    const fs::path blocker = dir_ / "blocker";
    std::ofstream(blocker) << "plain file";
    cfg["output_dir"] = (blocker / "sub").string();  // cannot create below a file
    EXPECT_EQ(ergolab("run " + write_config("r.json", cfg).string()).exit_code, 4);
}

TEST_F(CliTest, ProtocolRunWritesAConvergenceSeries) {
    json cfg = {
        {"kind", "protocol1"},
        {"hamiltonian", {{"builder", "heisenberg_xxx"}, {"n", 3}, {"J", 1.0}, {"h", 1.0}}},
        {"state", {{"fixture", "fig2_rho"}}},
        {"measurement", {{"fixture", "two_qubit_blocks"}}},
        {"epsilon", 0.01},
        {"delta", 1e-4},
        {"seed", 7u},
        {"shots_override", 50000u},
        {"threads", 2},
        {"output_dir", (dir_ / "out").string()},
    };
    const auto res = ergolab("run " + write_config("p1.json", cfg).string());
    ASSERT_EQ(res.exit_code, 0) << res.output;

    const json doc = json::parse(slurp(dir_ / "out" / "result.json"));
    EXPECT_NEAR(doc["summary"]["exact_reference"].get<double>(), 1.3660254037844395, 1e-9);
    EXPECT_EQ(doc["summary"]["shots"].get<std::uint64_t>(), 50000u);

    const std::string csv = slurp(dir_ / "out" / "convergence.csv");
    ASSERT_FALSE(csv.empty());
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    EXPECT_EQ(header, "shot_index,running_estimate,exact_reference,abs_error");
    std::size_t rows = 0;
    std::string line, last;
    while (std::getline(lines, line))
        if (!line.empty()) {
            ++rows;
            last = line;
        }
    EXPECT_GT(rows, 100u);
    EXPECT_LE(rows, 10001u);
    EXPECT_EQ(last.substr(0, 6), "50000,");
}

TEST_F(CliTest, IdenticalConfigsGiveIdenticalCsvAcrossThreadCounts) {
    json cfg = {
        {"kind", "protocol1"},
        {"hamiltonian", {{"builder", "number"}, {"n", 3}}},
        {"state", {{"fixture", "appendixD_rho"}}},
        {"measurement", {{"fixture", "appendixD_entangled"}}},
        {"epsilon", 0.05},
        {"delta", 0.01},
        {"seed", 99u},
        {"shots_override", 30000u},
        {"output_dir", (dir_ / "a").string()},
    };
    ASSERT_EQ(ergolab("run " + write_config("a.json", cfg).string() + " --threads 1").exit_code, 0);
    cfg["output_dir"] = (dir_ / "b").string();
    ASSERT_EQ(ergolab("run " + write_config("b.json", cfg).string() + " --threads 8").exit_code, 0);
    EXPECT_EQ(slurp(dir_ / "a" / "convergence.csv"), slurp(dir_ / "b" / "convergence.csv"));

    // and a bit-identical repeat of the same invocation
    cfg["output_dir"] = (dir_ / "c").string();
    ASSERT_EQ(ergolab("run " + write_config("c.json", cfg).string() + " --threads 1").exit_code, 0);
    EXPECT_EQ(slurp(dir_ / "a" / "convergence.csv"), slurp(dir_ / "c" / "convergence.csv"));

    // thread count from the environment behaves like the flag
    cfg["output_dir"] = (dir_ / "d").string();
    const auto env_run = run_command("ERGOLAB_THREADS=8 " + bin_ + " run " +
                                     write_config("d.json", cfg).string());
    ASSERT_EQ(env_run.exit_code, 0) << env_run.output;
    EXPECT_EQ(slurp(dir_ / "a" / "convergence.csv"), slurp(dir_ / "d" / "convergence.csv"));
}

TEST_F(CliTest, InducedRandomStateInput) {
    json cfg = {
        {"kind", "exact"},
        {"hamiltonian", {{"builder", "number"}, {"n", 1}}},
        {"state", {{"induced", {{"N", 2}, {"Nprime", 4}}}}},
        {"seed", 99u},
        {"output_dir", (dir_ / "out").string()},
    };
    const auto path = write_config("induced.json", cfg);
    ASSERT_EQ(ergolab("run " + path.string()).exit_code, 0);
    const json doc1 = json::parse(slurp(dir_ / "out" / "result.json"));
    EXPECT_GE(doc1["summary"]["ergotropy"].get<double>(), -1e-10);
    // reproducible: same seed, same drawn state
    ASSERT_EQ(ergolab("run " + path.string()).exit_code, 0);
    const json doc2 = json::parse(slurp(dir_ / "out" / "result.json"));
    EXPECT_EQ(doc1["summary"]["ergotropy"].get<double>(),
              doc2["summary"]["ergotropy"].get<double>());
}

TEST_F(CliTest, SeedOverrideChangesTheRun) {
    json cfg = {
        {"kind", "probe"},
        {"hamiltonian", {{"builder", "number"}, {"n", 3}}},
        {"state", {{"fixture", "appendixD_rho"}}},
        {"measurement", {{"fixture", "appendixD_entangled"}}},
        {"epsilon", 0.05},
        {"delta", 0.1},
        {"seed", 1u},
        {"output_dir", (dir_ / "out").string()},
    };
    const auto path = write_config("probe.json", cfg);
    ASSERT_EQ(ergolab("run " + path.string()).exit_code, 0);
    const json doc1 = json::parse(slurp(dir_ / "out" / "result.json"));
    ASSERT_EQ(ergolab("run " + path.string() + " --seed 2").exit_code, 0);
    const json doc2 = json::parse(slurp(dir_ / "out" / "result.json"));
    EXPECT_EQ(doc2["config"]["seed"].get<std::uint64_t>(), 2u);
    EXPECT_NE(doc1["summary"]["p_hat"].dump(), doc2["summary"]["p_hat"].dump());
    // exact probabilities agree regardless of seed
    EXPECT_EQ(doc1["summary"]["p_exact"].dump(), doc2["summary"]["p_exact"].dump());
}

TEST_F(CliTest, ConcentrationRunWritesTheTailTable) {
    json cfg = {
        {"kind", "concentration"},
        {"hamiltonian",
         {{"matrix", json::array({json::array({json::array({1.0, 0.0}), json::array({0.0, 0.0})}),
                                  json::array({json::array({0.0, 0.0}),
                                               json::array({-1.0, 0.0})})})}}},
        {"nprime", 8},
        {"samples", 2000u},
        {"seed", 5u},
        {"threads", 2},
        {"output_dir", (dir_ / "out").string()},
    };
    const auto res = ergolab("run " + write_config("conc.json", cfg).string());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    const json doc = json::parse(slurp(dir_ / "out" / "result.json"));
    EXPECT_LE(doc["summary"]["max_tail_excess"].get<double>(), 0.0);

    const std::string csv = slurp(dir_ / "out" / "tail.csv");
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    EXPECT_EQ(header, "gamma,empirical,bound");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(lines, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 20u);
}

TEST_F(CliTest, PipelineAndLipschitzKindsRun) {
    json pipeline = {
        {"kind", "pipeline"},
        {"hamiltonian", {{"builder", "number"}, {"n", 3}}},
        {"state", {{"fixture", "appendixD_rho"}}},
        {"measurement", {{"fixture", "appendixD_entangled"}}},
        {"epsilon", 0.05},
        {"delta", 0.05},
        {"stage1", {{"use_gap_epsilon", true}, {"delta", 0.05}}},
        {"shots_override", 40000u},
        {"seed", 11u},
        {"threads", 2},
        {"output_dir", (dir_ / "p").string()},
    };
    auto res = ergolab("run " + write_config("pipe.json", pipeline).string());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    json doc = json::parse(slurp(dir_ / "p" / "result.json"));
    EXPECT_NEAR(doc["summary"]["exact_observational_ergotropy"].get<double>(), 1.0 / 3.0, 1e-9);
    EXPECT_EQ(doc["summary"]["total_samples"].get<std::uint64_t>(),
              doc["summary"]["stage1_shots"].get<std::uint64_t>() + 40000u);

    json lipschitz = {
        {"kind", "lipschitz"},
        {"hamiltonian", {{"builder", "number"}, {"n", 1}}},
        {"nprime", 2},
        {"pairs", 2000u},
        {"seed", 12u},
        {"output_dir", (dir_ / "l").string()},
    };
    res = ergolab("run " + write_config("lip.json", lipschitz).string());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    doc = json::parse(slurp(dir_ / "l" / "result.json"));
    EXPECT_LE(doc["summary"]["max_ratio"].get<double>(),
              doc["summary"]["lipschitz_bound"].get<double>() + 1e-6);
}

TEST_F(CliTest, Protocol2And3RunViaCli) {
    json cfg = {
        {"kind", "protocol2"},
        {"hamiltonian", {{"builder", "heisenberg_xxx"}, {"n", 3}, {"J", 1.0}, {"h", 1.0}}},
        {"state", {{"fixture", "fig2_rho"}}},
        {"measurement", {{"fixture", "two_qubit_blocks"}}},
        {"epsilon", 0.05},
        {"delta", 0.01},
        {"seed", 13u},
        {"shots_override", 40000u},
        {"threads", 2},
        {"output_dir", (dir_ / "p2").string()},
    };
    ASSERT_EQ(ergolab("run " + write_config("p2.json", cfg).string()).exit_code, 0);

    cfg["kind"] = "protocol3";
    cfg["output_dir"] = (dir_ / "p3").string();
    ASSERT_EQ(ergolab("run " + write_config("p3.json", cfg).string()).exit_code, 0);
    const json doc = json::parse(slurp(dir_ / "p3" / "result.json"));
    EXPECT_NEAR(doc["summary"]["exact_reference"].get<double>(), 1.3660254037844395, 1e-9);

    // protocol 2 on a Hamiltonian without a Pauli form is a validation error
    json bad = cfg;
    bad["kind"] = "protocol2";
    bad["hamiltonian"] = {{"matrix", json::array({json::array({json::array({1.0, 0.0})})})}};
    bad["state"] = {{"induced", {{"N", 1}, {"Nprime", 1}}}};
    bad["measurement"] = {{"block_bases", json::array({json::array({json::array(
                              {json::array({1.0, 0.0})})})})}};
    EXPECT_EQ(ergolab("run " + write_config("bad2.json", bad).string()).exit_code, 3);
}
