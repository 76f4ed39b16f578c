// Nonparametric statistics for comparing attribution fingerprints.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "padex/common.hpp"

namespace padex {

struct UTestResult {
    double u = 0.0;  // wins of the first sample, ties counted 1/2
    double z = 0.0;
    double p_two_sided = 1.0;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    bool tie_corrected = false;
};

/// Mann-Whitney U with the normal approximation: tie-corrected variance and a
/// 0.5 continuity correction. U counts pairs where xs beats ys.
inline UTestResult mann_whitney_u(std::span<const double> xs, std::span<const double> ys) {
    if (xs.empty() || ys.empty()) throw invalid_argument("mann_whitney_u: both samples must be non-empty");
    const std::size_t n1 = xs.size(), n2 = ys.size(), n = n1 + n2;

    std::vector<std::pair<double, int>> pooled;
    pooled.reserve(n);
    for (double v : xs) pooled.emplace_back(v, 0);
    for (double v : ys) pooled.emplace_back(v, 1);
    std::sort(pooled.begin(), pooled.end());

    // Midranks; the tie term accumulates sum(t^3 - t) over tie groups.
    double rank_sum_x = 0.0, tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && pooled[j].first == pooled[i].first) ++j;
        const double t = static_cast<double>(j - i);
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (pooled[k].second == 0) rank_sum_x += midrank;
        tie_term += t * t * t - t;
        i = j;
    }

    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(n);
    UTestResult r;
    r.n1 = n1;
    r.n2 = n2;
    r.u = rank_sum_x - dn1 * (dn1 + 1.0) / 2.0;
    r.tie_corrected = tie_term > 0.0;

    const double mean = dn1 * dn2 / 2.0;
    const double variance = n > 1 ? dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0))) : 0.0;
    if (!(variance > 0.0)) {
        r.z = 0.0;
        r.p_two_sided = 1.0;
        return r;
    }
    const double sigma = std::sqrt(variance);
    const double deviation = r.u - mean;
    const double corrected = std::max(std::abs(deviation) - 0.5, 0.0);
    r.z = std::copysign(corrected / sigma, deviation);
    r.p_two_sided = std::min(1.0, std::erfc(corrected / sigma / std::sqrt(2.0)));
    return r;
}

/// Empirical label frequencies keyed by ascending bitmask.
using LabelDistribution = std::map<std::uint64_t, double>;

inline LabelDistribution label_distribution(std::span<const std::uint64_t> labels) {
    if (labels.empty()) throw invalid_argument("label_distribution: no labels");
    LabelDistribution dist;
    for (auto l : labels) dist[l] += 1.0;
    for (auto& [label, f] : dist) f /= static_cast<double>(labels.size());
    return dist;
}

inline double tv_distance(const LabelDistribution& p, const LabelDistribution& q) {
    auto check = [](const LabelDistribution& d, const char* name) {
        double total = 0.0;
        for (const auto& [label, f] : d) {
            if (f < 0.0) throw invalid_argument(std::string("tv_distance: negative mass in ") + name);
            total += f;
        }
        if (std::abs(total - 1.0) > 1e-9) throw invalid_argument(std::string("tv_distance: ") + name + " does not sum to 1");
    };
    check(p, "p");
    check(q, "q");
    double sum = 0.0;
    auto pi = p.begin();
    auto qi = q.begin();
    while (pi != p.end() || qi != q.end()) {
        if (qi == q.end() || (pi != p.end() && pi->first < qi->first)) {
            sum += pi->second;
            ++pi;
        } else if (pi == p.end() || qi->first < pi->first) {
            sum += qi->second;
            ++qi;
        } else {
            sum += std::abs(pi->second - qi->second);
            ++pi;
            ++qi;
        }
    }
    return std::min(1.0, 0.5 * sum);
}

/// Spearman rank correlation with midranks for ties.
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw invalid_argument("spearman: need two equal-length samples of size >= 2");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
            for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j + 1);
            i = j;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0 || sbb == 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace padex
