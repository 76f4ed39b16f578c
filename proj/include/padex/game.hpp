// Coalition-formation game for cooperative sampling of a Point of Interest.
//
// Each agent's sampling quality decays exponentially with its distance to the
// PoI. A member's payoff is its quality minus a hinge-cosine penalty for every
// partner viewing the PoI from a similar angle and a flat overhead per
// partner, so the game is non-monotone: adding agents can lower welfare.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "padex/common.hpp"

namespace padex {

inline constexpr std::size_t kMaxAgents = 63;

struct Position {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Position&, const Position&) = default;
};

inline double distance(const Position& a, const Position& b) noexcept {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Agents on a G x G grid plus the Point of Interest. Index is identity.
struct SwarmInstance {
    std::vector<Position> agents;
    Position poi;
    int grid_side = 2;

    std::size_t size() const noexcept { return agents.size(); }

    void validate() const {
        if (grid_side < 1) throw invalid_argument("SwarmInstance: grid side must be positive");
        if (agents.empty()) throw invalid_argument("SwarmInstance: needs at least one agent");
        if (agents.size() > kMaxAgents) throw invalid_argument("SwarmInstance: too many agents");
        const double hi = grid_side - 1;
        auto inside = [hi](const Position& p) { return p.x >= 0 && p.y >= 0 && p.x <= hi && p.y <= hi; };
        for (std::size_t i = 0; i < agents.size(); ++i)
            if (!inside(agents[i])) throw invalid_argument("SwarmInstance: agent " + std::to_string(i) + " outside the grid");
        if (!inside(poi)) throw invalid_argument("SwarmInstance: PoI outside the grid");
    }
};

/// Subset of agent indices encoded as a bitmask (bit i = agent i).
class Coalition {
public:
    constexpr Coalition() = default;
    constexpr explicit Coalition(std::uint64_t bits) : bits_(bits) {}

    static constexpr Coalition singleton(std::size_t i) { return Coalition(std::uint64_t{1} << i); }
    static constexpr Coalition grand(std::size_t n) {
        return Coalition(n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1);
    }

    constexpr std::uint64_t bits() const noexcept { return bits_; }
    constexpr bool contains(std::size_t i) const noexcept { return (bits_ >> i) & 1U; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::size_t size() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }

    constexpr Coalition with(std::size_t i) const noexcept { return Coalition(bits_ | (std::uint64_t{1} << i)); }
    constexpr Coalition without(std::size_t i) const noexcept { return Coalition(bits_ & ~(std::uint64_t{1} << i)); }

    friend constexpr bool operator==(Coalition, Coalition) = default;
    friend constexpr auto operator<=>(Coalition, Coalition) = default;

private:
    std::uint64_t bits_ = 0;
};

struct PayoffParams {
    double lambda = 10.0;   // distance decay, grid units
    double beta = 0.02;     // similarity penalty weight
    double kappa = 0.08;    // per-partner overhead
    double eps_dist = 1e-6;

    static PayoffParams defaults_for_grid(int grid_side) {
        PayoffParams p;
        p.lambda = grid_side / 2.0;
        return p;
    }

    void validate() const {
        if (!std::isfinite(lambda) || !std::isfinite(beta) || !std::isfinite(kappa) || !std::isfinite(eps_dist))
            throw invalid_argument("PayoffParams: all fields must be finite");
        if (lambda <= 0) throw invalid_argument("PayoffParams: lambda must be > 0");
        if (eps_dist <= 0) throw invalid_argument("PayoffParams: eps_dist must be > 0");
        if (beta < 0 || kappa < 0) throw invalid_argument("PayoffParams: beta and kappa must be >= 0");
    }

    friend bool operator==(const PayoffParams&, const PayoffParams&) = default;
};

inline double sampling_quality(const Position& agent, const Position& poi, const PayoffParams& params) {
    const double d = std::max(distance(agent, poi), params.eps_dist);
    return std::exp(-d / params.lambda);
}

/// Cosine between the PoI-to-agent directions of agents i and j; 0 when
/// either agent sits on the PoI.
inline double pairwise_similarity(std::size_t i, std::size_t j, const SwarmInstance& inst, const PayoffParams& params) {
    const Position& a = inst.agents.at(i);
    const Position& b = inst.agents.at(j);
    const double ax = a.x - inst.poi.x, ay = a.y - inst.poi.y;
    const double bx = b.x - inst.poi.x, by = b.y - inst.poi.y;
    const double na = std::hypot(ax, ay), nb = std::hypot(bx, by);
    if (na < params.eps_dist || nb < params.eps_dist) return 0.0;
    const double c = (ax * bx + ay * by) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

/// Precomputed per-instance quantities. Every payoff query goes through here;
/// the free functions below are thin wrappers.
class PayoffTable {
public:
    PayoffTable(const SwarmInstance& inst, const PayoffParams& params)
        : n_(inst.size()), kappa_(params.kappa), quality_(n_), penalty_(n_ * n_, 0.0) {
        for (std::size_t i = 0; i < n_; ++i) quality_[i] = sampling_quality(inst.agents[i], inst.poi, params);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                if (i != j) penalty_[i * n_ + j] = params.beta * std::max(0.0, pairwise_similarity(i, j, inst, params));
    }

    std::size_t size() const noexcept { return n_; }
    double quality(std::size_t i) const { return quality_[i]; }
    /// beta * max(0, cos) between i and j.
    double penalty(std::size_t i, std::size_t j) const { return penalty_[i * n_ + j]; }

    double payoff(std::size_t i, Coalition s) const {
        if (!s.contains(i)) return 0.0;
        double value = quality_[i];
        std::size_t partners = 0;
        for (std::size_t j = 0; j < n_; ++j) {
            if (j == i || !s.contains(j)) continue;
            value -= penalty_[i * n_ + j];
            ++partners;
        }
        return value - kappa_ * static_cast<double>(partners);
    }

    double welfare(Coalition s) const {
        double total = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            if (s.contains(i)) total += payoff(i, s);
        return total;
    }

private:
    std::size_t n_;
    double kappa_;
    std::vector<double> quality_;
    std::vector<double> penalty_;
};

inline double agent_payoff(std::size_t i, Coalition s, const SwarmInstance& inst, const PayoffParams& params) {
    if (i >= inst.size()) throw invalid_argument("agent_payoff: agent index out of range");
    return PayoffTable(inst, params).payoff(i, s);
}

inline double coalition_welfare(Coalition s, const SwarmInstance& inst, const PayoffParams& params) {
    return PayoffTable(inst, params).welfare(s);
}

}  // namespace padex
