#include <gtest/gtest.h>

#include "padex/config.hpp"
#include "support.hpp"

using namespace padex;
using nlohmann::json;

namespace {

ErrorKind kind_of(const json& j) {
    try {
        run_config_from_json(j);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind{};
}

}  // namespace

TEST(RunConfig, DefaultsAreValidAndMatchTheSample) {
    const RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.payoff.lambda, 10.0);
    EXPECT_EQ(c.poison_levels.size(), 7U);
    const RunConfig sample = load_run_config(std::filesystem::path(PADEX_SAMPLES_DIR) / "default.json");
    EXPECT_EQ(run_config_to_json(sample), run_config_to_json(c));
}

TEST(RunConfig, EmptyDocumentGivesDefaults) {
    EXPECT_EQ(run_config_to_json(run_config_from_json(json::object())), run_config_to_json(RunConfig{}));
}

TEST(RunConfig, RoundTrip) {
    RunConfig c;
    c.experiment = "x";
    c.agents = 4;
    c.forest.max_depth = 9;
    c.forest.n_trees = 7;
    c.explain_method = ShapMethod::sampled;
    c.permutations = 33;
    c.poison_levels = {0.05, 0.45};
    c.seeds = {9};
    c.poison_prior = LabelPrior::uniform;
    c.solver.eta = 1.5;
    const json j = run_config_to_json(c);
    EXPECT_EQ(run_config_to_json(run_config_from_json(j)), j);
    EXPECT_EQ(j.at("forest").at("max_depth"), 9);
    EXPECT_TRUE(run_config_to_json(RunConfig{}).at("forest").at("max_depth").is_null());
}

TEST(RunConfig, PartialOverridesKeepOtherDefaults) {
    const auto c = run_config_from_json(json::parse(R"({"forest": {"n_trees": 5}, "seeds": [4, 5]})"));
    EXPECT_EQ(c.forest.n_trees, 5);
    EXPECT_EQ(c.forest.min_leaf, 1);
    EXPECT_EQ(c.forest.max_depth, kUnlimitedDepth);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
    EXPECT_EQ(c.dataset_size, 10000U);
}

TEST(RunConfig, GridSideMovesTheDefaultLengthScale) {
    EXPECT_EQ(run_config_from_json(json{{"grid_side", 30}}).payoff.lambda, 15.0);
    EXPECT_EQ(run_config_from_json(json{{"grid_side", 30}, {"payoff", {{"lambda", 4.0}}}}).payoff.lambda, 4.0);
}

TEST(RunConfig, RejectsUnknownKeysAtEveryLevel) {
    EXPECT_EQ(kind_of(json{{"agent", 5}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"payoff", {{"gamma", 1}}}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"solver", {{"steps", 1}}}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"forest", {{"depth", 1}}}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"explainer", {{"kind", "exact"}}}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json::array()), ErrorKind::invalid_argument);
}

TEST(RunConfig, RejectsBadValues) {
    EXPECT_EQ(kind_of(json{{"poison_levels", {0.5}}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"agents", 0}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"agents", "five"}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"seeds", json::array()}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"alpha", 1.0}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"explainer", {{"method", "kernel"}}}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"poison_prior", "best"}}), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of(json{{"test_fraction", 0.0}}), ErrorKind::invalid_argument);
}

TEST(RunConfig, FileErrors) {
    padex::testing::TempDir dir("cfg");
    EXPECT_THROW(load_run_config(dir / "missing.json"), Error);
    write_text_file(dir / "bad.json", "{\"agents\": ");
    try {
        load_run_config(dir / "bad.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
    }
    const auto quick = load_run_config(std::filesystem::path(PADEX_SAMPLES_DIR) / "quick.json");
    EXPECT_EQ(quick.dataset_size, 1500U);
}
