// Replicator-style revision dynamics over join propensities, with inertia
// (random revision opportunities) and myopia (gains judged against the
// current profile only), plus brute-force stability checks.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "padex/common.hpp"
#include "padex/game.hpp"

namespace padex {

struct SolverConfig {
    double eta = 4.0;          // replicator step size
    double rho = 0.5;          // revision probability per agent per step
    double eps_conv = 1e-3;
    int max_iters = 500;
    double init_jitter = 0.1;
    int mc_samples = 256;      // used when N > kExactGainAgents

    void validate() const {
        if (!(eta > 0) || !std::isfinite(eta)) throw invalid_argument("SolverConfig: eta must be > 0");
        if (!(rho > 0 && rho <= 1)) throw invalid_argument("SolverConfig: rho must be in (0, 1]");
        if (!(eps_conv > 0 && eps_conv < 0.5)) throw invalid_argument("SolverConfig: eps_conv must be in (0, 0.5)");
        if (max_iters < 1) throw invalid_argument("SolverConfig: max_iters must be positive");
        if (!(init_jitter >= 0) || init_jitter > 0.5) throw invalid_argument("SolverConfig: init_jitter must be in [0, 0.5]");
        if (mc_samples < 1) throw invalid_argument("SolverConfig: mc_samples must be positive");
    }

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

struct GameSolution {
    Coalition coalition;
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<double> propensities;
    double welfare = 0.0;
};

/// Partner expectations are enumerated exactly up to this many agents.
inline constexpr std::size_t kExactGainAgents = 12;

/// E[payoff of i in S + {i}] with each other agent j in S independently with
/// probability p[j]. Leaving yields 0, so this is also the gain from joining.
inline double expected_join_gain(std::size_t i, std::span<const double> p, const PayoffTable& table,
                                 int mc_samples = 256, Rng* rng = nullptr) {
    const std::size_t n = table.size();
    if (i >= n || p.size() != n) throw invalid_argument("expected_join_gain: index or propensity length mismatch");

    std::vector<std::size_t> others;
    others.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
        if (j != i) others.push_back(j);

    if (n <= kExactGainAgents) {
        double total = 0.0;
        const std::uint64_t subsets = std::uint64_t{1} << others.size();
        for (std::uint64_t m = 0; m < subsets; ++m) {
            double weight = 1.0;
            Coalition s = Coalition::singleton(i);
            for (std::size_t k = 0; k < others.size(); ++k) {
                const double pj = p[others[k]];
                if ((m >> k) & 1U) {
                    weight *= pj;
                    s = s.with(others[k]);
                } else {
                    weight *= 1.0 - pj;
                }
            }
            if (weight != 0.0) total += weight * table.payoff(i, s);
        }
        return total;
    }

    if (rng == nullptr) throw invalid_argument("expected_join_gain: Monte Carlo path requires a generator");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double total = 0.0;
    for (int draw = 0; draw < mc_samples; ++draw) {
        Coalition s = Coalition::singleton(i);
        for (std::size_t j : others)
            if (unit(*rng) < p[j]) s = s.with(j);
        total += table.payoff(i, s);
    }
    return total / mc_samples;
}

inline double expected_join_gain(std::size_t i, std::span<const double> p, const SwarmInstance& inst,
                                 const PayoffParams& params, int mc_samples = 256, Rng* rng = nullptr) {
    return expected_join_gain(i, p, PayoffTable(inst, params), mc_samples, rng);
}

/// One synchronous revision round. Every agent draws its revision gate, so
/// the generator advances identically whatever the outcome.
inline std::vector<double> step(std::span<const double> p, const PayoffTable& table, const SolverConfig& cfg, Rng& rng) {
    std::vector<double> next(p.begin(), p.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool revises = unit(rng) < cfg.rho;
        if (!revises) continue;
        const double pi = p[i];
        if (pi <= 0.0 || pi >= 1.0) continue;
        const double gain = expected_join_gain(i, p, table, cfg.mc_samples, &rng);
        next[i] = std::clamp(pi + cfg.eta * pi * (1.0 - pi) * gain, 0.0, 1.0);
    }
    return next;
}

inline std::vector<double> step(std::span<const double> p, const SwarmInstance& inst, const PayoffParams& params,
                                const SolverConfig& cfg, Rng& rng) {
    return step(p, PayoffTable(inst, params), cfg, rng);
}

inline bool is_pure(std::span<const double> p, double eps) {
    return std::all_of(p.begin(), p.end(), [eps](double v) { return v <= eps || v >= 1.0 - eps; });
}

inline Coalition coalition_from_propensities(std::span<const double> p) {
    Coalition s;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.5) s = s.with(i);
    return s;
}

inline GameSolution solve(const SwarmInstance& inst, const PayoffParams& params, const SolverConfig& cfg,
                          std::uint64_t seed) {
    inst.validate();
    params.validate();
    cfg.validate();
    const PayoffTable table(inst, params);
    Rng rng(seed);
    std::uniform_real_distribution<double> jitter(-cfg.init_jitter, cfg.init_jitter);

    std::vector<double> p(inst.size());
    for (double& v : p) v = 0.5 + (cfg.init_jitter > 0 ? jitter(rng) : 0.0);

    GameSolution out;
    while (out.iterations < static_cast<std::size_t>(cfg.max_iters) && !is_pure(p, cfg.eps_conv)) {
        p = step(p, table, cfg, rng);
        ++out.iterations;
    }
    out.converged = is_pure(p, cfg.eps_conv);
    out.coalition = coalition_from_propensities(p);
    out.propensities = std::move(p);
    out.welfare = table.welfare(out.coalition);
    return out;
}

/// Solver seed tied to the instance geometry, so the instance -> label map
/// is a deterministic function for a given master seed.
inline std::uint64_t instance_seed(const SwarmInstance& inst, std::uint64_t master_seed) {
    std::uint64_t h = splitmix64(master_seed ^ inst.size());
    auto absorb = [&h](double v) { h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v)); };
    for (const Position& a : inst.agents) {
        absorb(a.x);
        absorb(a.y);
    }
    absorb(inst.poi.x);
    absorb(inst.poi.y);
    return h;
}

/// Self-enforcement: no member loses by staying, no outsider gains by joining.
inline bool is_nash_stable(Coalition s, const PayoffTable& table) {
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (s.contains(i)) {
            if (table.payoff(i, s) < 0.0) return false;
        } else if (table.payoff(i, s.with(i)) > 0.0) {
            return false;
        }
    }
    return true;
}

inline bool is_nash_stable(Coalition s, const SwarmInstance& inst, const PayoffParams& params) {
    return is_nash_stable(s, PayoffTable(inst, params));
}

inline constexpr std::size_t kMaxBruteForceAgents = 16;

inline std::vector<Coalition> brute_force_stable(const SwarmInstance& inst, const PayoffParams& params) {
    if (inst.size() > kMaxBruteForceAgents)
        throw guard_error("brute_force_stable: N = " + std::to_string(inst.size()) + " exceeds the limit of 16 agents");
    const PayoffTable table(inst, params);
    std::vector<Coalition> out;
    const std::uint64_t total = std::uint64_t{1} << inst.size();
    for (std::uint64_t m = 0; m < total; ++m)
        if (is_nash_stable(Coalition(m), table)) out.emplace_back(m);
    return out;
}

}  // namespace padex
