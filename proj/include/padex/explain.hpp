// Shapley-value attributions for the forest under the interventional
// (marginal) value function
//
//   v(S) = mean over background rows b of P(class | x on S, b elsewhere).
//
// Exact attributions enumerate all 2^d subsets. For trees the subset table is
// built without 2^d forest evaluations: for each (tree, background row) the
// composite input can only reach a handful of leaves, each guarded by "these
// features must come from x, those from b". The sampled estimator walks
// random feature permutations against v(S) evaluated directly.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "padex/common.hpp"
#include "padex/data.hpp"
#include "padex/forest.hpp"

namespace padex {

enum class ShapMethod { exact, sampled };

inline const char* to_string(ShapMethod m) { return m == ShapMethod::exact ? "exact" : "sampled"; }

struct Attribution {
    std::vector<double> phi;
    double base_value = 0.0;  // v(empty set)
    double full_value = 0.0;  // v(all features)
    std::uint64_t target_class = 0;
    ShapMethod method = ShapMethod::exact;
    std::size_t sample_count = 0;  // permutations, sampled method only
};

struct BackgroundSet {
    Matrix rows;
    std::uint64_t seed = 0;
};

/// Draws `size` distinct clean rows (poisoned flag 0) from `train`.
inline BackgroundSet sample_background(const Dataset& train, std::size_t size, std::uint64_t seed) {
    std::vector<std::size_t> clean;
    for (std::size_t r = 0; r < train.rows(); ++r)
        if (!train.poisoned[r]) clean.push_back(r);
    if (size < 1) throw invalid_argument("sample_background: size must be >= 1");
    if (clean.size() < size)
        throw invalid_argument("sample_background: only " + std::to_string(clean.size()) + " clean rows for " +
                               std::to_string(size) + " background samples");
    Rng rng(seed);
    std::shuffle(clean.begin(), clean.end(), rng);
    clean.resize(size);
    std::sort(clean.begin(), clean.end());
    BackgroundSet bg;
    bg.seed = seed;
    bg.rows = Matrix(0, train.dim());
    for (std::size_t r : clean) bg.rows.append_row(train.features.row(r));
    return bg;
}

namespace detail {

inline std::size_t checked_class(const ForestModel& model, std::uint64_t label) {
    const auto idx = model.class_index(label);
    if (idx < 0) throw invalid_argument("explain: class " + std::to_string(label) + " is not a model class");
    return static_cast<std::size_t>(idx);
}

inline void check_inputs(const ForestModel& model, std::span<const double> x, const BackgroundSet& bg) {
    check_dimension(model, x);
    if (bg.rows.rows() < 1) throw invalid_argument("explain: empty background set");
    if (bg.rows.cols() != model.n_features) throw invalid_argument("explain: background dimension mismatch");
}

/// Per-leaf probability of one class, indexed by leaf slot.
inline std::vector<double> leaf_class_values(const DecisionTree& tree, std::size_t cls) {
    std::vector<double> values(tree.leaf_count());
    for (std::size_t slot = 0; slot < values.size(); ++slot) {
        const auto counts = tree.leaf_counts(static_cast<std::int32_t>(slot));
        values[slot] = counts[cls] / std::accumulate(counts.begin(), counts.end(), 0.0);
    }
    return values;
}

struct PathCollector {
    const DecisionTree& tree;
    const std::vector<double>& leaf_value;
    std::span<const double> x;
    std::span<const double> b;
    std::unordered_map<std::uint64_t, double>& weights;  // key: in_mask | out_mask << 32

    void walk(std::int32_t at, std::uint32_t in_mask, std::uint32_t out_mask) {
        const auto& node = tree.nodes()[at];
        if (node.is_leaf()) {
            weights[in_mask | (std::uint64_t{out_mask} << 32)] += leaf_value[node.left];
            return;
        }
        const auto bit = std::uint32_t{1} << node.feature;
        const std::int32_t via_x = x[node.feature] <= node.threshold ? node.left : node.right;
        const std::int32_t via_b = b[node.feature] <= node.threshold ? node.left : node.right;
        if (via_x == via_b || (in_mask & bit)) return walk(via_x, in_mask, out_mask);
        if (out_mask & bit) return walk(via_b, in_mask, out_mask);
        walk(via_x, in_mask | bit, out_mask);
        walk(via_b, in_mask, out_mask | bit);
    }
};

}  // namespace detail

inline std::vector<double> composite(std::span<const double> x, std::span<const double> b, std::uint64_t subset) {
    std::vector<double> z(b.begin(), b.end());
    for (std::size_t j = 0; j < z.size(); ++j)
        if ((subset >> j) & 1U) z[j] = x[j];
    return z;
}

/// v(S) for the feature subset encoded by the bitmask `subset`.
inline double value_function(std::uint64_t subset, std::span<const double> x, const ForestModel& model,
                             const BackgroundSet& bg, std::uint64_t target_class) {
    detail::check_inputs(model, x, bg);
    const std::size_t cls = detail::checked_class(model, target_class);
    if (model.n_features < 64 && (subset >> model.n_features)) throw invalid_argument("value_function: subset out of range");
    double total = 0.0;
    for (std::size_t r = 0; r < bg.rows.rows(); ++r) total += predict_proba(model, composite(x, bg.rows.row(r), subset))[cls];
    return total / static_cast<double>(bg.rows.rows());
}

inline constexpr std::size_t kMaxExactFeatures = 15;

/// v(S) for every subset S, indexed by bitmask.
inline std::vector<double> subset_values(std::span<const double> x, const ForestModel& model, const BackgroundSet& bg,
                                         std::uint64_t target_class) {
    detail::check_inputs(model, x, bg);
    const std::size_t d = model.n_features;
    if (d > kMaxExactFeatures)
        throw guard_error("exact Shapley enumeration supports d <= 15 (got d = " + std::to_string(d) +
                          "); use the sampled explainer");
    const std::size_t cls = detail::checked_class(model, target_class);

    std::unordered_map<std::uint64_t, double> weights;
    for (const auto& tree : model.trees) {
        const auto leaf_value = detail::leaf_class_values(tree, cls);
        for (std::size_t r = 0; r < bg.rows.rows(); ++r) {
            detail::PathCollector collector{tree, leaf_value, x, bg.rows.row(r), weights};
            collector.walk(0, 0, 0);
        }
    }
    std::vector<std::pair<std::uint64_t, double>> terms(weights.begin(), weights.end());
    std::sort(terms.begin(), terms.end());

    const double scale = 1.0 / (static_cast<double>(model.trees.size()) * static_cast<double>(bg.rows.rows()));
    const std::size_t n_subsets = std::size_t{1} << d;
    std::vector<double> values(n_subsets, 0.0);
    for (const auto& [key, w] : terms) {
        const auto in_mask = static_cast<std::uint32_t>(key);
        const auto out_mask = static_cast<std::uint32_t>(key >> 32);
        for (std::size_t s = 0; s < n_subsets; ++s)
            if ((s & in_mask) == in_mask && (s & out_mask) == 0) values[s] += w;
    }
    for (double& v : values) v *= scale;
    return values;
}

/// Shapley values from a complete subset-value table of size 2^d.
inline std::vector<double> shapley_from_table(std::span<const double> values, std::size_t d) {
    std::vector<double> weight(d);
    for (std::size_t s = 0; s < d; ++s) {
        // s! (d - s - 1)! / d!
        double w = 1.0 / static_cast<double>(d);
        for (std::size_t k = 1; k <= s; ++k) w *= static_cast<double>(k) / static_cast<double>(d - k);
        weight[s] = w;
    }
    std::vector<double> phi(d, 0.0);
    for (std::size_t s = 0; s < values.size(); ++s) {
        const auto size = static_cast<std::size_t>(std::popcount(s));
        for (std::size_t j = 0; j < d; ++j) {
            if ((s >> j) & 1U) continue;
            phi[j] += weight[size] * (values[s | (std::size_t{1} << j)] - values[s]);
        }
    }
    return phi;
}

inline Attribution shapley_exact(std::span<const double> x, const ForestModel& model, const BackgroundSet& bg,
                                 std::uint64_t target_class) {
    const auto values = subset_values(x, model, bg, target_class);
    Attribution a;
    a.phi = shapley_from_table(values, model.n_features);
    a.base_value = values.front();
    a.full_value = values.back();
    a.target_class = target_class;
    a.method = ShapMethod::exact;
    return a;
}

enum class PermutationMode { random, all_permutations };

/// Monte Carlo over feature orderings. In all_permutations mode every one of
/// the d! orderings is visited once (M is ignored) and the estimate is exact.
inline Attribution shapley_sampled(std::span<const double> x, const ForestModel& model, const BackgroundSet& bg,
                                   std::uint64_t target_class, std::size_t permutations, std::uint64_t seed,
                                   PermutationMode mode = PermutationMode::random) {
    detail::check_inputs(model, x, bg);
    detail::checked_class(model, target_class);
    if (permutations < 1 && mode == PermutationMode::random) throw invalid_argument("shapley_sampled: M must be >= 1");
    const std::size_t d = model.n_features;

    std::unordered_map<std::uint64_t, double> memo;
    auto v = [&](std::uint64_t s) {
        const auto it = memo.find(s);
        if (it != memo.end()) return it->second;
        return memo[s] = value_function(s, x, model, bg, target_class);
    };

    std::vector<double> phi(d, 0.0);
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    auto accumulate = [&] {
        std::uint64_t prefix = 0;
        double before = v(prefix);
        for (std::size_t j : order) {
            prefix |= std::uint64_t{1} << j;
            const double after = v(prefix);
            phi[j] += after - before;
            before = after;
        }
    };

    std::size_t count = 0;
    if (mode == PermutationMode::all_permutations) {
        do {
            accumulate();
            ++count;
        } while (std::next_permutation(order.begin(), order.end()));
    } else {
        Rng rng(seed);
        for (; count < permutations; ++count) {
            std::shuffle(order.begin(), order.end(), rng);
            accumulate();
        }
    }
    for (double& p : phi) p /= static_cast<double>(count);

    Attribution a;
    a.phi = std::move(phi);
    a.base_value = v(0);
    a.full_value = v(d >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << d) - 1);
    a.target_class = target_class;
    a.method = ShapMethod::sampled;
    a.sample_count = count;
    return a;
}

struct ExplainOptions {
    ShapMethod method = ShapMethod::exact;
    std::size_t permutations = 200;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

/// Attributions for K samples, each explaining the model's own predicted class.
struct ShapFingerprint {
    std::vector<Attribution> attributions;
    std::vector<std::uint64_t> predicted;
    std::vector<double> per_sample_mean_effect;  // (1/d) * sum_j phi_kj, length K
    std::vector<double> per_feature_importance;  // (1/K) * sum_k |phi_kj|, length d
};

inline void aggregate(ShapFingerprint& fp, std::size_t d) {
    const std::size_t k = fp.attributions.size();
    fp.per_sample_mean_effect.assign(k, 0.0);
    fp.per_feature_importance.assign(d, 0.0);
    for (std::size_t s = 0; s < k; ++s) {
        const auto& phi = fp.attributions[s].phi;
        fp.per_sample_mean_effect[s] = std::accumulate(phi.begin(), phi.end(), 0.0) / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) fp.per_feature_importance[j] += std::abs(phi[j]);
    }
    for (double& v : fp.per_feature_importance) v /= static_cast<double>(k);
}

inline ShapFingerprint fingerprint(const ForestModel& model, const Matrix& samples, const BackgroundSet& bg,
                                   const ExplainOptions& opts = {}) {
    if (samples.rows() < 1) throw invalid_argument("fingerprint: need at least one sample");
    if (samples.cols() != model.n_features) throw invalid_argument("fingerprint: sample dimension mismatch");
    ShapFingerprint fp;
    fp.attributions.resize(samples.rows());
    fp.predicted.resize(samples.rows());
    parallel_for(samples.rows(), opts.jobs, [&](std::size_t k) {
        const auto x = samples.row(k);
        const std::uint64_t cls = predict(model, x);
        fp.predicted[k] = cls;
        fp.attributions[k] = opts.method == ShapMethod::exact
                                 ? shapley_exact(x, model, bg, cls)
                                 : shapley_sampled(x, model, bg, cls, opts.permutations, mix_seed(opts.seed, k));
    });
    aggregate(fp, model.n_features);
    return fp;
}

/// CSV export: one row per sample with phi_0..phi_{d-1}, base_value, full_value.
inline void save_attributions_csv(const ShapFingerprint& fp, std::size_t d, const std::filesystem::path& path) {
    std::string text;
    for (std::size_t j = 0; j < d; ++j) text += "phi" + std::to_string(j) + ",";
    text += "base_value,full_value,target_class,method\n";
    for (const auto& a : fp.attributions) {
        for (double p : a.phi) text += format_double(p) + ",";
        text += format_double(a.base_value) + "," + format_double(a.full_value) + "," + std::to_string(a.target_class) +
                "," + to_string(a.method) + "\n";
    }
    write_text_file(path, text);
}

}  // namespace padex
