// End-to-end experiment: generate, split, train clean models, sweep poison
// levels, write tables and a manifest. Used by the `padex pipeline` command.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "padex/config.hpp"
#include "padex/diagnose.hpp"

namespace padex {

inline constexpr const char* kPadexVersion = "0.1.0";
inline constexpr const char* kPartialMarker = ".partial";

/// Replicate seed used by single-step commands when none is given.
inline std::uint64_t default_replicate_seed(const RunConfig& cfg) { return cfg.seeds.front(); }

inline std::string clean_model_name(std::uint64_t replicate_seed) {
    return "model_clean_seed" + std::to_string(replicate_seed) + ".json";
}

inline SweepConfig sweep_config(const RunConfig& cfg, unsigned jobs) {
    SweepConfig sc;
    sc.levels = {0.0};
    sc.levels.insert(sc.levels.end(), cfg.poison_levels.begin(), cfg.poison_levels.end());
    sc.seeds = cfg.seeds;
    sc.payoff = cfg.payoff;
    sc.solver = cfg.solver;
    sc.forest = cfg.forest;
    sc.fingerprint_samples = cfg.fingerprint_samples;
    sc.background_size = cfg.background_size;
    sc.explain.method = cfg.explain_method;
    sc.explain.permutations = cfg.permutations;
    sc.alpha = cfg.alpha;
    sc.max_resample = cfg.max_resample;
    sc.poison_prior = cfg.poison_prior;
    sc.jobs = jobs;
    return sc;
}

struct PipelineResult {
    Dataset dataset;
    Split split;
    SweepResult sweep;
    std::vector<std::filesystem::path> files;  // relative to the output directory
    double wall_seconds = 0.0;
};

/// Runs every stage. On failure the `.partial` marker stays behind, naming the
/// stage that failed, and the exception propagates unchanged.
inline PipelineResult run_pipeline(const RunConfig& cfg, const std::filesystem::path& out, unsigned jobs = 1) {
    namespace fs = std::filesystem;
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw data_error("cannot create output directory " + out.string() + ": " + ec.message());
    const fs::path marker = out / kPartialMarker;
    write_text_file(marker, "stage: start\n");

    PipelineResult result;
    std::string stage;
    auto record = [&](const fs::path& name) { result.files.push_back(name); };
    try {
        stage = "generate";
        write_text_file(marker, "stage: " + stage + "\n");
        result.dataset = generate(cfg.dataset_size, cfg.agents, cfg.grid_side, cfg.payoff, cfg.solver, cfg.seed, jobs);
        save_csv(result.dataset, out / "dataset.csv");
        record("dataset.csv");

        stage = "split";
        write_text_file(marker, "stage: " + stage + "\n");
        result.split = split(result.dataset, cfg.test_fraction, cfg.seed);
        save_csv(result.split.train, out / "train.csv");
        save_csv(result.split.test, out / "test.csv");
        write_text_file(out / "split.json", nlohmann::json(result.split).dump(2) + "\n");
        record("train.csv");
        record("test.csv");
        record("split.json");

        stage = "sweep";
        write_text_file(marker, "stage: " + stage + "\n");
        result.sweep = severity_sweep(result.split, sweep_config(cfg, jobs));
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
            save_model(result.sweep.clean_models[s], out / clean_model_name(cfg.seeds[s]));
            record(clean_model_name(cfg.seeds[s]));
        }

        stage = "report";
        write_text_file(marker, "stage: " + stage + "\n");
        write_text_file(out / "sweep.csv", sweep_csv(result.sweep));
        record("sweep.csv");
        nlohmann::json report = sweep_json(result.sweep);
        report["experiment"] = cfg.experiment;
        report["alpha"] = cfg.alpha;
        report["test_label_distribution"] = distribution_json(label_distribution(result.split.test.labels));
        write_text_file(out / "report.json", report.dump(2) + "\n");
        record("report.json");

        result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        nlohmann::json files = nlohmann::json::array();
        for (const auto& f : result.files) files.push_back(f.string());
        const nlohmann::json manifest = {
            {"config", run_config_to_json(cfg)},
            {"seed", cfg.seed},
            {"seeds", cfg.seeds},
            {"versions", {{"padex", kPadexVersion}, {"model_format", kModelFormatVersion}}},
            {"jobs", jobs},
            {"wall_time_seconds", result.wall_seconds},
            {"files", files}};
        write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
        record("manifest.json");
    } catch (const std::exception& e) {
        std::ofstream(marker, std::ios::trunc) << "stage: " << stage << "\nerror: " << e.what() << "\n";
        throw;
    }
    fs::remove(marker, ec);
    return result;
}

}  // namespace padex
