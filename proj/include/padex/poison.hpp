// Feature-perturbation poisoning: appends rows with fake lattice coordinates
// labeled by a coalition that is strictly worse (lower welfare) than the one
// the swarm would actually form there.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "padex/common.hpp"
#include "padex/data.hpp"
#include "padex/game.hpp"
#include "padex/solver.hpp"

namespace padex {

// Where the attacker draws candidate labels from before the welfare check.
enum class LabelPrior {
    worst,         // the minimum-welfare coalition
    clean_labels,  // replay coalitions seen in the clean training set
    uniform,       // any of the 2^N - 1 other coalitions
};

inline const char* to_string(LabelPrior p) {
    switch (p) {
        case LabelPrior::worst: return "worst";
        case LabelPrior::clean_labels: return "clean_labels";
        case LabelPrior::uniform: return "uniform";
    }
    return "?";
}

inline LabelPrior label_prior_from_string(const std::string& s) {
    if (s == "worst") return LabelPrior::worst;
    if (s == "clean_labels") return LabelPrior::clean_labels;
    if (s == "uniform") return LabelPrior::uniform;
    throw invalid_argument("unknown poison label prior '" + s + "' (expected worst, clean_labels or uniform)");
}

struct PoisonConfig {
    double level = 0.0;  // poisoned fraction of the final training set
    std::uint64_t seed = 0;
    int max_resample = 100;
    LabelPrior prior = LabelPrior::worst;

    void validate() const {
        if (!(level >= 0.0 && level < 0.5))
            throw invalid_argument("poison level " + format_double(level) + " outside [0, 0.5)");
        if (max_resample < 1) throw invalid_argument("PoisonConfig: max_resample must be positive");
    }
};

struct PoisonStats {
    std::size_t injected = 0;
    std::size_t fallback = 0;  // rows whose label is merely different, not worse
    std::vector<std::size_t> fallback_rows;
};

/// Smallest m with m / (n + m) >= level.
inline std::size_t poison_row_count(std::size_t n, double level) {
    if (level <= 0.0) return 0;
    const double exact = level * static_cast<double>(n) / (1.0 - level);
    auto m = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    while (static_cast<double>(m) < level * static_cast<double>(n + m) - 1e-9) ++m;
    return m;
}

inline std::vector<double> severity_grid() { return {0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40}; }

inline Dataset poison(const Dataset& train, const PoisonConfig& cfg, const PayoffParams& params,
                      const SolverConfig& solver_cfg, PoisonStats* stats = nullptr, unsigned jobs = 1) {
    cfg.validate();
    if (train.rows() == 0) throw invalid_argument("poison: empty training set");
    for (auto flag : train.poisoned)
        if (flag) throw invalid_argument("poison: training set already contains poisoned rows");
    const std::size_t agents = train.dim() / 2;
    const int grid_side = train.meta.grid_side;
    if (agents == 0 || agents > kMaxAgents) throw invalid_argument("poison: bad feature width");
    if (grid_side < 2) throw invalid_argument("poison: dataset metadata lacks the grid side");

    Dataset out = train;
    out.meta.poison_level = cfg.level;
    const std::size_t m = poison_row_count(train.rows(), cfg.level);

    struct Row {
        std::vector<double> x;
        std::uint64_t label = 0;
        bool fallback = false;
    };
    std::vector<Row> rows(m);
    const std::uint64_t label_space = std::uint64_t{1} << agents;
    parallel_for(m, jobs, [&](std::size_t j) {
        Rng rng(mix_seed(cfg.seed, j));
        SwarmInstance inst = sample_instance(agents, grid_side, rng);
        GameSolution sol = label_instance(inst, params, solver_cfg, train.meta.seed);
        for (int attempt = 1; !usable_label(sol, inst, params) && attempt < cfg.max_resample; ++attempt) {
            inst = sample_instance(agents, grid_side, rng);
            sol = label_instance(inst, params, solver_cfg, train.meta.seed);
        }
        const PayoffTable table(inst, params);
        const double optimal = table.welfare(sol.coalition);

        std::uniform_int_distribution<std::uint64_t> pick(0, label_space - 2);
        auto any_other = [&] {
            std::uint64_t c = pick(rng);
            return c >= sol.coalition.bits() ? c + 1 : c;
        };
        std::uniform_int_distribution<std::size_t> pick_row(0, train.rows() - 1);
        std::uint64_t candidate = 0;
        bool worse = false;
        if (cfg.prior == LabelPrior::worst) {
            double lowest = optimal;
            for (std::uint64_t c = 0; c < label_space; ++c) {
                const double w = table.welfare(Coalition(c));
                if (w < lowest) {
                    lowest = w;
                    candidate = c;
                    worse = true;
                }
            }
        } else {
            for (int attempt = 0; attempt < cfg.max_resample && !worse; ++attempt) {
                candidate = cfg.prior == LabelPrior::uniform ? any_other() : train.labels[pick_row(rng)];
                worse = candidate != sol.coalition.bits() && table.welfare(Coalition(candidate)) < optimal;
            }
        }
        if (!worse) candidate = any_other();
        rows[j] = {instance_features(inst), candidate, !worse};
    });

    PoisonStats local;
    for (std::size_t j = 0; j < m; ++j) {
        out.append(rows[j].x, rows[j].label, true);
        if (rows[j].fallback) {
            ++local.fallback;
            local.fallback_rows.push_back(train.rows() + j);
        }
    }
    local.injected = m;
    if (stats) *stats = std::move(local);
    return out;
}

}  // namespace padex
