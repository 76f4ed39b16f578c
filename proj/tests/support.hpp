// Shared helpers for the unit tests: deterministic random instances and
// small independent oracles written without the library's payoff code.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "padex/data.hpp"
#include "padex/game.hpp"

namespace padex::testing {

inline SwarmInstance random_instance(std::size_t n, int grid, std::uint64_t seed) {
    Rng rng(seed);
    return sample_instance(n, grid, rng);
}

/// Agents and PoI placed by hand on a large grid.
inline SwarmInstance make_instance(std::vector<Position> agents, Position poi, int grid = 41) {
    SwarmInstance inst;
    inst.agents = std::move(agents);
    inst.poi = poi;
    inst.grid_side = grid;
    return inst;
}

/// Payoff from polar angles instead of dot products.
inline double oracle_payoff(std::size_t i, std::uint64_t members, const SwarmInstance& inst, const PayoffParams& p) {
    if (!((members >> i) & 1U)) return 0.0;
    auto rel = [&](std::size_t k) { return std::pair{inst.agents[k].x - inst.poi.x, inst.agents[k].y - inst.poi.y}; };
    const auto [ix, iy] = rel(i);
    const double ri = std::sqrt(ix * ix + iy * iy);
    double value = std::exp(-std::max(ri, p.eps_dist) / p.lambda);
    for (std::size_t j = 0; j < inst.size(); ++j) {
        if (j == i || !((members >> j) & 1U)) continue;
        const auto [jx, jy] = rel(j);
        const double rj = std::sqrt(jx * jx + jy * jy);
        double c = 0.0;
        if (ri >= p.eps_dist && rj >= p.eps_dist) c = std::cos(std::atan2(iy, ix) - std::atan2(jy, jx));
        value -= p.beta * std::max(0.0, c) + p.kappa;
    }
    return value;
}

inline double oracle_welfare(std::uint64_t members, const SwarmInstance& inst, const PayoffParams& p) {
    double w = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) w += oracle_payoff(i, members, inst, p);
    return w;
}

/// Stability by explicit unilateral deviations, two nested loops over
/// coalitions and agents.
inline std::vector<std::uint64_t> oracle_stable_sets(const SwarmInstance& inst, const PayoffParams& params) {
    std::vector<std::uint64_t> out;
    const std::size_t n = inst.size();
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
        bool stable = true;
        for (std::size_t i = 0; i < n && stable; ++i) {
            const bool member = (m >> i) & 1U;
            const double stay = member ? oracle_payoff(i, m, inst, params) : 0.0;
            const double deviate = member ? 0.0 : oracle_payoff(i, m | (std::uint64_t{1} << i), inst, params);
            if (member && deviate > stay) stable = false;
            if (!member && deviate > stay) stable = false;
        }
        if (stable) out.push_back(m);
    }
    return out;
}

inline double pair_count_u(const std::vector<double>& xs, const std::vector<double>& ys) {
    double u = 0.0;
    for (double x : xs)
        for (double y : ys) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
    return u;
}

/// Two-sided exact permutation p for U by enumerating every relabeling.
inline double exact_permutation_p(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<double> pooled(xs);
    pooled.insert(pooled.end(), ys.begin(), ys.end());
    const std::size_t n = pooled.size(), n1 = xs.size();
    const double mean = static_cast<double>(n1 * ys.size()) / 2.0;
    const double observed = std::abs(pair_count_u(xs, ys) - mean);
    std::size_t extreme = 0, total = 0;
    for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != n1) continue;
        std::vector<double> a, b;
        for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1U ? a : b).push_back(pooled[i]);
        ++total;
        if (std::abs(pair_count_u(a, b) - mean) >= observed - 1e-12) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

/// Scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("padex_test_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace padex::testing
