#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "padex/common.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using padex::read_text_file;
using padex::write_text_file;
using padex::testing::TempDir;

namespace {

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = (env.empty() ? "" : env + " ") + std::string(PADEX_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path tiny_config(const TempDir& dir) {
    const fs::path path = dir / "tiny.json";
    write_text_file(path, R"({"experiment": "tiny", "agents": 3, "dataset_size": 200, "forest": {"n_trees": 5},
        "background_size": 10, "fingerprint_samples": 10, "poison_levels": [0.2], "seeds": [1, 2], "seed": 11})");
    return path;
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
    TempDir dir("cli_usage");
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("generate --bogus"), 1);
    EXPECT_EQ(run("generate --config " + q(dir / "absent.json")), 1);
    write_text_file(dir / "typo.json", R"({"agnets": 5})");
    EXPECT_EQ(run("generate --config " + q(dir / "typo.json") + " --out " + q(dir / "o")), 1);
    EXPECT_EQ(run("pipeline --level 0.5 --out " + q(dir / "o")), 1);
    EXPECT_EQ(run("poison --out " + q(dir / "o")), 1);
    EXPECT_EQ(run("diagnose --out " + q(dir / "o")), 1);
    EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, MissingInputsExitTwo) {
    TempDir dir("cli_io");
    EXPECT_EQ(run("train --data " + q(dir / "nope.csv") + " --out " + q(dir / "o")), 2);
    write_text_file(dir / "broken.csv", "x0,y0,label,poisoned\n1,2\n");
    EXPECT_EQ(run("train --data " + q(dir / "broken.csv") + " --out " + q(dir / "o")), 2);
}

TEST(Cli, ExactExplainOnSixteenFeaturesExitsThree) {
    TempDir dir("cli_guard");
    write_text_file(dir / "wide.json", R"({"agents": 8, "dataset_size": 40, "forest": {"n_trees": 2},
        "background_size": 5, "fingerprint_samples": 3})");
    const std::string common = " --config " + q(dir / "wide.json") + " --out " + q(dir.path());
    ASSERT_EQ(run("generate" + common), 0);
    ASSERT_EQ(run("train" + common), 0);
    EXPECT_EQ(run("explain" + common), 3);
}

TEST(Cli, OutputDirectoryPrecedence) {
    TempDir dir("cli_out");
    const auto cfg = tiny_config(dir);
    ASSERT_EQ(run("generate --config " + q(cfg), "PADEX_OUT=" + q(dir / "env")), 0);
    EXPECT_TRUE(fs::exists(dir / "env" / "dataset.csv"));
    ASSERT_EQ(run("generate --config " + q(cfg) + " --out " + q(dir / "flag"), "PADEX_OUT=" + q(dir / "env2")), 0);
    EXPECT_TRUE(fs::exists(dir / "flag" / "dataset.csv"));
    EXPECT_FALSE(fs::exists(dir / "env2"));
    for (const char* name : {"dataset.csv", "train.csv", "test.csv", "split.json"})
        EXPECT_EQ(read_text_file(dir / "env" / name), read_text_file(dir / "flag" / name)) << name;
}

TEST(Cli, SeedFlagChangesGeneration) {
    TempDir dir("cli_seed");
    const auto cfg = tiny_config(dir);
    ASSERT_EQ(run("generate --config " + q(cfg) + " --out " + q(dir / "a")), 0);
    ASSERT_EQ(run("generate --config " + q(cfg) + " --seed 12 --out " + q(dir / "b")), 0);
    ASSERT_EQ(run("generate --config " + q(cfg) + " --seed 12 --jobs 3 --out " + q(dir / "c")), 0);
    EXPECT_NE(read_text_file(dir / "a" / "dataset.csv"), read_text_file(dir / "b" / "dataset.csv"));
    EXPECT_EQ(read_text_file(dir / "b" / "dataset.csv"), read_text_file(dir / "c" / "dataset.csv"));
    EXPECT_EQ(line_count(read_text_file(dir / "a" / "dataset.csv")), 201U);
}

TEST(Cli, PipelineWritesManifestAndReproducesSingleSteps) {
    TempDir dir("cli_pipe");
    const auto cfg = tiny_config(dir);
    const fs::path out = dir / "run";
    ASSERT_EQ(run("pipeline --config " + q(cfg) + " --jobs 2 --out " + q(out)), 0);
    EXPECT_FALSE(fs::exists(out / ".partial"));

    const auto manifest = nlohmann::json::parse(read_text_file(out / "manifest.json"));
    EXPECT_EQ(manifest.at("seed"), 11);
    EXPECT_EQ(manifest.at("config").at("seed"), 11);
    EXPECT_EQ(manifest.at("jobs"), 2);
    EXPECT_TRUE(manifest.at("versions").contains("padex"));
    for (const auto& f : manifest.at("files")) {
        const fs::path p = out / f.get<std::string>();
        EXPECT_TRUE(fs::exists(p)) << p;
        EXPECT_EQ(fs::weakly_canonical(p).parent_path(), fs::weakly_canonical(out));
    }
    // Levels 0 and 0.2, two seeds, plus the header.
    EXPECT_EQ(line_count(read_text_file(out / "sweep.csv")), 5U);

    // The same replicate seed through the single-step command gives the same model bytes.
    ASSERT_EQ(run("train --config " + q(cfg) + " --seed 2 --out " + q(out) + " --name replay.json"), 0);
    EXPECT_EQ(read_text_file(out / "replay.json"), read_text_file(out / "model_clean_seed2.json"));

    // Re-running from the manifest's config echo reproduces the sweep table.
    write_text_file(dir / "echo.json", manifest.at("config").dump());
    ASSERT_EQ(run("pipeline --config " + q(dir / "echo.json") + " --out " + q(dir / "again")), 0);
    EXPECT_EQ(read_text_file(dir / "again" / "sweep.csv"), read_text_file(out / "sweep.csv"));
}

TEST(Cli, PoisonExplainDiagnoseChain) {
    TempDir dir("cli_chain");
    const auto cfg = tiny_config(dir);
    const std::string common = " --config " + q(cfg) + " --out " + q(dir.path());
    ASSERT_EQ(run("generate" + common), 0);
    ASSERT_EQ(run("train" + common), 0);
    ASSERT_EQ(run("poison --level 0.2" + common), 0);
    const std::string poisoned = read_text_file(dir / "train_poison_0.20.csv");
    EXPECT_EQ(line_count(poisoned), 1U + 160U + 40U);
    ASSERT_EQ(run("train --data " + q(dir / "train_poison_0.20.csv") + " --name deployed.json" + common), 0);
    ASSERT_EQ(run("explain" + common), 0);
    EXPECT_EQ(line_count(read_text_file(dir / "attributions.csv")), 11U);
    ASSERT_EQ(run("diagnose --deployed " + q(dir / "deployed.json") + common), 0);
    const auto report = nlohmann::json::parse(read_text_file(dir / "report.json"));
    EXPECT_TRUE(report.at("verdict") == "clean" || report.at("verdict") == "poisoned");
    EXPECT_EQ(report.at("clean").at("per_sample_mean_effect").size(), 10U);
    ASSERT_EQ(run("diagnose --deployed " + q(dir / "model.json") + " --name self.json" + common), 0);
    const auto self = nlohmann::json::parse(read_text_file(dir / "self.json"));
    EXPECT_EQ(self.at("verdict"), "clean");
    EXPECT_EQ(self.at("u_result").at("p_two_sided"), 1.0);
}

TEST(Cli, FailedPipelineLeavesPartialMarker) {
    TempDir dir("cli_partial");
    write_text_file(dir / "stuck.json", R"({"agents": 5, "dataset_size": 50, "solver": {"max_iters": 1}})");
    EXPECT_EQ(run("pipeline --config " + q(dir / "stuck.json") + " --out " + q(dir / "o")), 2);
    ASSERT_TRUE(fs::exists(dir / "o" / ".partial"));
    const std::string marker = read_text_file(dir / "o" / ".partial");
    EXPECT_NE(marker.find("stage: generate"), std::string::npos);
    EXPECT_NE(marker.find("error:"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "o" / "manifest.json"));
}
