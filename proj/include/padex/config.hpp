// Run configuration: one JSON document describing a whole experiment.
// Unknown keys are rejected so a typo never silently falls back to a default.

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "padex/data.hpp"
#include "padex/explain.hpp"
#include "padex/forest.hpp"
#include "padex/poison.hpp"

namespace padex {

struct RunConfig {
    std::string experiment = "padex-default";
    std::size_t agents = 5;
    int grid_side = 20;
    std::size_t dataset_size = 10000;
    PayoffParams payoff = PayoffParams::defaults_for_grid(20);
    SolverConfig solver;
    ForestHyperparams forest;
    std::size_t background_size = 50;
    std::size_t fingerprint_samples = 100;
    ShapMethod explain_method = ShapMethod::exact;
    std::size_t permutations = 200;
    std::vector<double> poison_levels = severity_grid();
    std::uint64_t seed = 42;                   // dataset generation and split
    std::vector<std::uint64_t> seeds{1, 2, 3};  // sweep replicates
    double test_fraction = 0.2;
    double alpha = 0.05;
    int max_resample = 100;
    LabelPrior poison_prior = LabelPrior::worst;
    std::string output_dir = "padex_out";

    void validate() const {
        if (agents < 1 || agents > kMaxAgents) throw invalid_argument("config: agents must be in [1, 63]");
        if (grid_side < 2) throw invalid_argument("config: grid_side must be >= 2");
        if (dataset_size < 2) throw invalid_argument("config: dataset_size must be >= 2");
        payoff.validate();
        solver.validate();
        forest.validate(2 * agents);
        if (background_size < 1) throw invalid_argument("config: background_size must be >= 1");
        if (fingerprint_samples < 1) throw invalid_argument("config: fingerprint_samples must be >= 1");
        if (permutations < 1) throw invalid_argument("config: permutations must be >= 1");
        for (double l : poison_levels) PoisonConfig{l, 0, max_resample}.validate();
        if (seeds.empty()) throw invalid_argument("config: seeds must not be empty");
        if (!(test_fraction > 0 && test_fraction < 1)) throw invalid_argument("config: test_fraction must be in (0, 1)");
        if (!(alpha > 0 && alpha < 1)) throw invalid_argument("config: alpha must be in (0, 1)");
        if (max_resample < 1) throw invalid_argument("config: max_resample must be positive");
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw invalid_argument("config: " + where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw invalid_argument("config: unknown key '" + key + "' in " + where);
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

/// Reads a config document; omitted keys keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    using detail::read_if;
    RunConfig c;
    try {
        detail::reject_unknown(j,
                               {"experiment", "agents", "grid_side", "dataset_size", "payoff", "solver", "forest",
                                "background_size", "fingerprint_samples", "explainer", "poison_levels", "seed", "seeds",
                                "test_fraction", "alpha", "max_resample", "poison_prior", "output_dir"},
                               "config");
        read_if(j, "experiment", c.experiment);
        read_if(j, "agents", c.agents);
        read_if(j, "grid_side", c.grid_side);
        if (j.contains("grid_side") && !(j.contains("payoff") && j.at("payoff").contains("lambda")))
            c.payoff.lambda = PayoffParams::defaults_for_grid(c.grid_side).lambda;
        read_if(j, "dataset_size", c.dataset_size);
        if (j.contains("payoff")) {
            const auto& p = j.at("payoff");
            detail::reject_unknown(p, {"lambda", "beta", "kappa", "eps_dist"}, "payoff");
            read_if(p, "lambda", c.payoff.lambda);
            read_if(p, "beta", c.payoff.beta);
            read_if(p, "kappa", c.payoff.kappa);
            read_if(p, "eps_dist", c.payoff.eps_dist);
        }
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            detail::reject_unknown(s, {"eta", "rho", "eps_conv", "max_iters", "init_jitter", "mc_samples"}, "solver");
            read_if(s, "eta", c.solver.eta);
            read_if(s, "rho", c.solver.rho);
            read_if(s, "eps_conv", c.solver.eps_conv);
            read_if(s, "max_iters", c.solver.max_iters);
            read_if(s, "init_jitter", c.solver.init_jitter);
            read_if(s, "mc_samples", c.solver.mc_samples);
        }
        if (j.contains("forest")) {
            const auto& f = j.at("forest");
            detail::reject_unknown(f, {"n_trees", "max_depth", "min_leaf", "mtry", "bootstrap"}, "forest");
            read_if(f, "n_trees", c.forest.n_trees);
            if (f.contains("max_depth")) c.forest.max_depth = depth_from_json(f.at("max_depth"));
            read_if(f, "min_leaf", c.forest.min_leaf);
            read_if(f, "mtry", c.forest.mtry);
            read_if(f, "bootstrap", c.forest.bootstrap);
        }
        read_if(j, "background_size", c.background_size);
        read_if(j, "fingerprint_samples", c.fingerprint_samples);
        if (j.contains("explainer")) {
            const auto& e = j.at("explainer");
            detail::reject_unknown(e, {"method", "permutations"}, "explainer");
            if (e.contains("method")) {
                const auto m = e.at("method").get<std::string>();
                if (m == "exact") c.explain_method = ShapMethod::exact;
                else if (m == "sampled") c.explain_method = ShapMethod::sampled;
                else throw invalid_argument("config: explainer.method must be 'exact' or 'sampled'");
            }
            read_if(e, "permutations", c.permutations);
        }
        read_if(j, "poison_levels", c.poison_levels);
        read_if(j, "seed", c.seed);
        read_if(j, "seeds", c.seeds);
        read_if(j, "test_fraction", c.test_fraction);
        read_if(j, "alpha", c.alpha);
        read_if(j, "max_resample", c.max_resample);
        if (j.contains("poison_prior")) c.poison_prior = label_prior_from_string(j.at("poison_prior").get<std::string>());
        read_if(j, "output_dir", c.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw invalid_argument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    return {{"experiment", c.experiment},
            {"agents", c.agents},
            {"grid_side", c.grid_side},
            {"dataset_size", c.dataset_size},
            {"payoff", c.payoff},
            {"solver", c.solver},
            {"forest",
             {{"n_trees", c.forest.n_trees},
              {"max_depth", depth_to_json(c.forest.max_depth)},
              {"min_leaf", c.forest.min_leaf},
              {"mtry", c.forest.mtry},
              {"bootstrap", c.forest.bootstrap}}},
            {"background_size", c.background_size},
            {"fingerprint_samples", c.fingerprint_samples},
            {"explainer", {{"method", to_string(c.explain_method)}, {"permutations", c.permutations}}},
            {"poison_levels", c.poison_levels},
            {"seed", c.seed},
            {"seeds", c.seeds},
            {"test_fraction", c.test_fraction},
            {"alpha", c.alpha},
            {"max_resample", c.max_resample},
            {"poison_prior", to_string(c.poison_prior)},
            {"output_dir", c.output_dir}};
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw invalid_argument("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw invalid_argument(path.string() + ": invalid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace padex
