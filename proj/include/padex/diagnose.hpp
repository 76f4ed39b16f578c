// Benign-vs-deployed comparison of attribution fingerprints and the poison
// severity sweep.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "padex/data.hpp"
#include "padex/explain.hpp"
#include "padex/forest.hpp"
#include "padex/poison.hpp"
#include "padex/stats.hpp"

namespace padex {

struct BehaviorFingerprint {
    ShapFingerprint shap;
    LabelDistribution predicted_distribution;  // over the whole test set
    double accuracy = 0.0;
    nlohmann::json meta;  // model identity and seed lineage

    const std::vector<double>& per_sample_mean_effect() const { return shap.per_sample_mean_effect; }
    const std::vector<double>& per_feature_importance() const { return shap.per_feature_importance; }
};

/// Fingerprints `model` on the first `samples` rows of `test`.
inline BehaviorFingerprint behavior_fingerprint(const ForestModel& model, const Dataset& test, std::size_t samples,
                                                const BackgroundSet& bg, const ExplainOptions& opts = {}) {
    if (samples < 1 || samples > test.rows())
        throw invalid_argument("behavior_fingerprint: need 1 <= K <= " + std::to_string(test.rows()) + " samples");
    Matrix panel(0, test.dim());
    for (std::size_t r = 0; r < samples; ++r) panel.append_row(test.features.row(r));

    BehaviorFingerprint fp;
    fp.shap = fingerprint(model, panel, bg, opts);
    std::vector<std::uint64_t> predicted(test.rows());
    for (std::size_t r = 0; r < test.rows(); ++r) predicted[r] = predict(model, test.features.row(r));
    fp.predicted_distribution = label_distribution(predicted);
    fp.accuracy = accuracy(model, test);
    fp.meta = {{"forest_seed", model.hyperparams.seed},
               {"n_trees", model.trees.size()},
               {"background_seed", bg.seed},
               {"samples", samples},
               {"method", to_string(opts.method)}};
    return fp;
}

enum class Verdict { clean, poisoned };

inline const char* to_string(Verdict v) { return v == Verdict::clean ? "clean" : "poisoned"; }

struct DiagnosisReport {
    UTestResult u_result;
    double accuracy_clean = 0.0;
    double accuracy_deployed = 0.0;
    double tv_shift = 0.0;
    double alpha = 0.05;
    Verdict verdict = Verdict::clean;
};

inline Verdict verdict_for(const UTestResult& u, double alpha) {
    return u.p_two_sided < alpha ? Verdict::poisoned : Verdict::clean;
}

inline DiagnosisReport compare(const BehaviorFingerprint& clean, const BehaviorFingerprint& deployed, double alpha = 0.05) {
    if (clean.per_sample_mean_effect().size() != deployed.per_sample_mean_effect().size() ||
        clean.per_feature_importance().size() != deployed.per_feature_importance().size())
        throw invalid_argument("compare: fingerprints differ in sample count or feature dimension");
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_argument("compare: alpha must be in (0, 1)");
    DiagnosisReport r;
    r.u_result = mann_whitney_u(clean.per_sample_mean_effect(), deployed.per_sample_mean_effect());
    r.accuracy_clean = clean.accuracy;
    r.accuracy_deployed = deployed.accuracy;
    r.tv_shift = tv_distance(clean.predicted_distribution, deployed.predicted_distribution);
    r.alpha = alpha;
    r.verdict = verdict_for(r.u_result, alpha);
    return r;
}

inline void to_json(nlohmann::json& j, const UTestResult& u) {
    j = {{"u", u.u}, {"z", u.z}, {"p_two_sided", u.p_two_sided},
         {"n1", u.n1}, {"n2", u.n2}, {"tie_corrected", u.tie_corrected}};
}

inline void to_json(nlohmann::json& j, const DiagnosisReport& r) {
    j = {{"u_result", r.u_result},       {"accuracy_clean", r.accuracy_clean},
         {"accuracy_deployed", r.accuracy_deployed}, {"tv_shift", r.tv_shift},
         {"alpha", r.alpha},             {"verdict", to_string(r.verdict)}};
}

inline nlohmann::json distribution_json(const LabelDistribution& d) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [label, f] : d) j[std::to_string(label)] = f;
    return j;
}

inline nlohmann::json fingerprint_json(const BehaviorFingerprint& fp) {
    return {{"per_sample_mean_effect", fp.per_sample_mean_effect()},
            {"per_feature_importance", fp.per_feature_importance()},
            {"predicted_distribution", distribution_json(fp.predicted_distribution)},
            {"accuracy", fp.accuracy},
            {"meta", fp.meta}};
}

// Severity sweep --------------------------------------------------------------

struct SweepConfig {
    std::vector<double> levels;  // typically 0 followed by severity_grid()
    std::vector<std::uint64_t> seeds;
    PayoffParams payoff;
    SolverConfig solver;
    ForestHyperparams forest;
    std::size_t fingerprint_samples = 100;
    std::size_t background_size = 50;
    ExplainOptions explain;
    double alpha = 0.05;
    int max_resample = 100;
    LabelPrior poison_prior = LabelPrior::worst;
    unsigned jobs = 1;
};

/// Seed lineage for one sweep seed. Clean and poisoned models share the
/// forest seed, so a level-0 cell reproduces the clean model exactly.
struct SeedLineage {
    std::uint64_t forest;
    std::uint64_t background;
    std::uint64_t explain;

    static SeedLineage from(std::uint64_t seed) {
        return {mix_seed(seed, 0xF0), mix_seed(seed, 0xB6), mix_seed(seed, 0xE1)};
    }
};

inline std::uint64_t poison_seed(std::uint64_t seed, double level) {
    return mix_seed(seed, 0x9000 + static_cast<std::uint64_t>(std::llround(level * 10000.0)));
}

struct SweepRow {
    double level = 0.0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    DiagnosisReport report;
    std::size_t injected = 0;
    std::size_t fallback = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;              // ordered by (level, seed) as configured
    std::vector<double> clean_accuracy;      // per seed
    std::vector<ForestModel> clean_models;   // per seed
    std::vector<BehaviorFingerprint> clean_fingerprints;
};

inline ForestHyperparams seeded(ForestHyperparams hp, std::uint64_t seed) {
    hp.seed = seed;
    return hp;
}

inline SweepResult severity_sweep(const Split& split, const SweepConfig& cfg) {
    for (double level : cfg.levels) PoisonConfig{level, 0, cfg.max_resample}.validate();
    if (cfg.seeds.empty()) throw invalid_argument("severity_sweep: no seeds");

    SweepResult result;
    const std::size_t n_seeds = cfg.seeds.size();
    result.clean_accuracy.resize(n_seeds);
    result.clean_models.resize(n_seeds);
    result.clean_fingerprints.resize(n_seeds);
    std::vector<BackgroundSet> backgrounds(n_seeds);

    ExplainOptions explain = cfg.explain;
    explain.jobs = 1;
    parallel_for(n_seeds, cfg.jobs, [&](std::size_t s) {
        const auto lineage = SeedLineage::from(cfg.seeds[s]);
        backgrounds[s] = sample_background(split.train, cfg.background_size, lineage.background);
        result.clean_models[s] = train(split.train, seeded(cfg.forest, lineage.forest));
        ExplainOptions opts = explain;
        opts.seed = lineage.explain;
        result.clean_fingerprints[s] =
            behavior_fingerprint(result.clean_models[s], split.test, cfg.fingerprint_samples, backgrounds[s], opts);
        result.clean_accuracy[s] = result.clean_fingerprints[s].accuracy;
    });

    const std::size_t n_levels = cfg.levels.size();
    result.rows.resize(n_seeds * n_levels);
    parallel_for(result.rows.size(), cfg.jobs, [&](std::size_t cell) {
        const std::size_t s = cell % n_seeds;
        const double level = cfg.levels[cell / n_seeds];
        const auto lineage = SeedLineage::from(cfg.seeds[s]);

        PoisonStats stats;
        const Dataset poisoned =
            poison(split.train, {level, poison_seed(cfg.seeds[s], level), cfg.max_resample, cfg.poison_prior}, cfg.payoff, cfg.solver, &stats);
        const ForestModel model = train(poisoned, seeded(cfg.forest, lineage.forest));
        ExplainOptions opts = explain;
        opts.seed = lineage.explain;
        const auto fp = behavior_fingerprint(model, split.test, cfg.fingerprint_samples, backgrounds[s], opts);

        SweepRow& row = result.rows[cell];
        row.level = level;
        row.seed = cfg.seeds[s];
        row.accuracy = fp.accuracy;
        row.report = compare(result.clean_fingerprints[s], fp, cfg.alpha);
        row.injected = stats.injected;
        row.fallback = stats.fallback;
    });
    return result;
}

inline std::string sweep_csv(const SweepResult& result) {
    std::string text = "level,seed,accuracy,U,p,tv,verdict\n";
    for (const auto& r : result.rows) {
        text += format_double(r.level) + "," + std::to_string(r.seed) + "," + format_double(r.accuracy) + "," +
                format_double(r.report.u_result.u) + "," + format_double(r.report.u_result.p_two_sided) + "," +
                format_double(r.report.tv_shift) + "," + to_string(r.report.verdict) + "\n";
    }
    return text;
}

inline nlohmann::json sweep_json(const SweepResult& result) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& r : result.rows)
        cells.push_back({{"level", r.level},
                         {"seed", r.seed},
                         {"accuracy", r.accuracy},
                         {"injected_rows", r.injected},
                         {"fallback_rows", r.fallback},
                         {"report", r.report}});
    nlohmann::json clean = nlohmann::json::array();
    for (const auto& fp : result.clean_fingerprints) clean.push_back(fingerprint_json(fp));
    return {{"cells", std::move(cells)}, {"clean_accuracy", result.clean_accuracy}, {"clean_fingerprints", std::move(clean)}};
}

}  // namespace padex
