// Random forest of CART classification trees over coalition labels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "padex/common.hpp"
#include "padex/data.hpp"

namespace padex {

inline constexpr int kUnlimitedDepth = std::numeric_limits<int>::max();

struct ForestHyperparams {
    int n_trees = 100;
    int max_depth = kUnlimitedDepth;
    int min_leaf = 1;
    int mtry = 0;  // 0 selects ceil(sqrt(d))
    bool bootstrap = true;
    std::uint64_t seed = 0;

    int resolved_mtry(std::size_t d) const {
        return mtry > 0 ? mtry : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    }

    void validate(std::size_t d) const {
        if (n_trees < 1) throw invalid_argument("ForestHyperparams: n_trees must be positive");
        if (max_depth < 1) throw invalid_argument("ForestHyperparams: max_depth must be positive");
        if (min_leaf < 1) throw invalid_argument("ForestHyperparams: min_leaf must be >= 1");
        if (mtry < 0 || static_cast<std::size_t>(resolved_mtry(d)) > d)
            throw invalid_argument("ForestHyperparams: mtry must be in [1, d]");
    }

    friend bool operator==(const ForestHyperparams&, const ForestHyperparams&) = default;
};

/// Flat binary tree. Internal nodes route x[feature] <= threshold to `left`;
/// leaves (feature < 0) keep their class counts at `leaf * n_classes`.
class DecisionTree {
public:
    struct Node {
        std::int32_t feature = -1;
        std::int32_t left = -1;  // leaf slot when feature < 0
        std::int32_t right = -1;
        double threshold = 0.0;

        bool is_leaf() const noexcept { return feature < 0; }
        friend bool operator==(const Node&, const Node&) = default;
    };

    DecisionTree() = default;
    explicit DecisionTree(std::size_t n_classes) : n_classes_(n_classes) {}

    std::size_t n_classes() const noexcept { return n_classes_; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t leaf_count() const noexcept { return n_classes_ ? counts_.size() / n_classes_ : 0; }

    std::int32_t add_leaf(std::span<const std::uint32_t> counts) {
        Node node;
        node.left = static_cast<std::int32_t>(leaf_count());
        counts_.insert(counts_.end(), counts.begin(), counts.end());
        nodes_.push_back(node);
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }

    std::int32_t add_split(std::int32_t feature, double threshold) {
        Node node;
        node.feature = feature;
        node.threshold = threshold;
        nodes_.push_back(node);
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }

    void set_children(std::int32_t node, std::int32_t left, std::int32_t right) {
        nodes_[node].left = left;
        nodes_[node].right = right;
    }

    std::span<const std::uint32_t> leaf_counts(std::int32_t leaf_slot) const {
        return {counts_.data() + static_cast<std::size_t>(leaf_slot) * n_classes_, n_classes_};
    }

    /// Node index of the leaf reached by x; the root is node 0.
    std::int32_t find_leaf(std::span<const double> x) const {
        std::int32_t at = 0;
        while (!nodes_[at].is_leaf()) at = x[nodes_[at].feature] <= nodes_[at].threshold ? nodes_[at].left : nodes_[at].right;
        return at;
    }

    /// Adds this tree's leaf class frequencies for x into `out`.
    void accumulate_proba(std::span<const double> x, std::span<double> out) const {
        const auto counts = leaf_counts(nodes_[find_leaf(x)].left);
        const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        for (std::size_t c = 0; c < n_classes_; ++c) out[c] += counts[c] / total;
    }

    int depth() const { return nodes_.empty() ? 0 : depth_from(0); }

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

private:
    int depth_from(std::int32_t at) const {
        if (nodes_[at].is_leaf()) return 0;
        return 1 + std::max(depth_from(nodes_[at].left), depth_from(nodes_[at].right));
    }

    std::size_t n_classes_ = 0;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> counts_;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::vector<std::uint64_t> classes;  // ascending label bitmasks
    ForestHyperparams hyperparams;
    std::size_t n_features = 0;

    std::ptrdiff_t class_index(std::uint64_t label) const {
        const auto it = std::lower_bound(classes.begin(), classes.end(), label);
        if (it == classes.end() || *it != label) return -1;
        return it - classes.begin();
    }

    friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

/// Weighted Gini impurity of a split, scaled by the node size:
/// n_l * gini(l) + n_r * gini(r). Sums of squares are exact integers.
inline double split_impurity(double n_left, double sumsq_left, double n_right, double sumsq_right) {
    return (n_left - sumsq_left / n_left) + (n_right - sumsq_right / n_right);
}

namespace detail {

struct SplitChoice {
    std::int32_t feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const std::int32_t> y, std::size_t n_classes, const ForestHyperparams& hp,
                Rng& rng)
        : x_(x), y_(y), n_classes_(n_classes), hp_(hp), rng_(rng), mtry_(hp.resolved_mtry(x.cols())) {}

    DecisionTree build(std::vector<std::uint32_t> rows) {
        rows_ = std::move(rows);
        DecisionTree tree(n_classes_);
        grow(tree, 0, rows_.size(), 0);
        return tree;
    }

private:
    std::int32_t grow(DecisionTree& tree, std::size_t begin, std::size_t end, int depth) {
        std::vector<std::uint32_t> counts(n_classes_, 0);
        for (std::size_t k = begin; k < end; ++k) ++counts[y_[rows_[k]]];
        const std::size_t n = end - begin;
        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        if (pure || depth >= hp_.max_depth || n < 2 * static_cast<std::size_t>(hp_.min_leaf)) return tree.add_leaf(counts);

        const SplitChoice best = best_split(begin, end, counts);
        if (best.feature < 0) return tree.add_leaf(counts);

        const auto mid_it = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                                  rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                                  [&](std::uint32_t r) { return x_(r, best.feature) <= best.threshold; });
        const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());
        const std::int32_t node = tree.add_split(best.feature, best.threshold);
        const std::int32_t left = grow(tree, begin, mid, depth + 1);
        const std::int32_t right = grow(tree, mid, end, depth + 1);
        tree.set_children(node, left, right);
        return node;
    }

    std::vector<std::int32_t> sample_features() {
        const std::size_t d = x_.cols();
        std::vector<std::int32_t> features(d);
        std::iota(features.begin(), features.end(), 0);
        for (std::size_t k = 0; k < static_cast<std::size_t>(mtry_); ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, d - 1);
            std::swap(features[k], features[pick(rng_)]);
        }
        features.resize(static_cast<std::size_t>(mtry_));
        std::sort(features.begin(), features.end());
        return features;
    }

    SplitChoice best_split(std::size_t begin, std::size_t end, std::span<const std::uint32_t> node_counts) {
        SplitChoice best;
        const std::size_t n = end - begin;
        const auto min_leaf = static_cast<std::size_t>(hp_.min_leaf);
        std::vector<std::pair<double, std::int32_t>> column(n);
        std::vector<std::uint32_t> left(n_classes_), right(n_classes_);

        double node_sumsq = 0.0;
        for (auto c : node_counts) node_sumsq += static_cast<double>(c) * c;

        for (std::int32_t f : sample_features()) {
            for (std::size_t k = 0; k < n; ++k) column[k] = {x_(rows_[begin + k], f), y_[rows_[begin + k]]};
            std::sort(column.begin(), column.end());
            if (column.front().first == column.back().first) continue;

            std::fill(left.begin(), left.end(), 0);
            std::copy(node_counts.begin(), node_counts.end(), right.begin());
            double sumsq_left = 0.0, sumsq_right = node_sumsq;
            for (std::size_t k = 0; k + 1 < n; ++k) {
                const auto c = static_cast<std::size_t>(column[k].second);
                sumsq_left += 2.0 * left[c] + 1.0;
                sumsq_right -= 2.0 * right[c] - 1.0;
                ++left[c];
                --right[c];
                const std::size_t n_left = k + 1, n_right = n - n_left;
                if (column[k].first == column[k + 1].first) continue;
                if (n_left < min_leaf || n_right < min_leaf) continue;
                const double impurity = split_impurity(static_cast<double>(n_left), sumsq_left,
                                                       static_cast<double>(n_right), sumsq_right);
                if (impurity < best.impurity) {
                    best.impurity = impurity;
                    best.feature = f;
                    best.threshold = 0.5 * (column[k].first + column[k + 1].first);
                }
            }
        }
        return best;
    }

    const Matrix& x_;
    std::span<const std::int32_t> y_;
    std::size_t n_classes_;
    const ForestHyperparams& hp_;
    Rng& rng_;
    int mtry_;
    std::vector<std::uint32_t> rows_;
};

}  // namespace detail

/// Trees are grown independently from mix_seed(hp.seed, tree index), so the
/// model is identical for any `jobs`.
inline ForestModel train(const Dataset& ds, const ForestHyperparams& hp, unsigned jobs = 1) {
    if (ds.rows() == 0) throw invalid_argument("train: empty dataset");
    hp.validate(ds.dim());

    ForestModel model;
    model.hyperparams = hp;
    model.n_features = ds.dim();
    model.classes = ds.labels;
    std::sort(model.classes.begin(), model.classes.end());
    model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());

    std::vector<std::int32_t> y(ds.rows());
    for (std::size_t r = 0; r < ds.rows(); ++r) y[r] = static_cast<std::int32_t>(model.class_index(ds.labels[r]));

    model.trees.resize(static_cast<std::size_t>(hp.n_trees));
    parallel_for(model.trees.size(), jobs, [&](std::size_t t) {
        Rng rng(mix_seed(hp.seed, t));
        std::vector<std::uint32_t> rows(ds.rows());
        if (hp.bootstrap) {
            std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(ds.rows() - 1));
            for (auto& r : rows) r = pick(rng);
            std::sort(rows.begin(), rows.end());
        } else {
            std::iota(rows.begin(), rows.end(), 0U);
        }
        detail::TreeBuilder builder(ds.features, y, model.classes.size(), hp, rng);
        model.trees[t] = builder.build(std::move(rows));
    });
    return model;
}

inline void check_dimension(const ForestModel& model, std::span<const double> x) {
    if (x.size() != model.n_features)
        throw invalid_argument("forest: expected " + std::to_string(model.n_features) + " features, got " +
                               std::to_string(x.size()));
}

inline std::vector<double> predict_proba(const ForestModel& model, std::span<const double> x) {
    check_dimension(model, x);
    std::vector<double> p(model.classes.size(), 0.0);
    for (const auto& tree : model.trees) tree.accumulate_proba(x, p);
    for (double& v : p) v /= static_cast<double>(model.trees.size());
    return p;
}

/// Index into model.classes of the most probable class; ties go to the lower index.
inline std::size_t predict_index(const ForestModel& model, std::span<const double> x) {
    const auto p = predict_proba(model, x);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

inline std::uint64_t predict(const ForestModel& model, std::span<const double> x) {
    return model.classes[predict_index(model, x)];
}

inline double accuracy(const ForestModel& model, const Dataset& ds) {
    if (ds.rows() == 0) throw invalid_argument("accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) hits += predict(model, ds.features.row(r)) == ds.labels[r];
    return static_cast<double>(hits) / static_cast<double>(ds.rows());
}

// JSON persistence -----------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

// Unlimited depth is written as null.
inline nlohmann::json depth_to_json(int max_depth) {
    return max_depth == kUnlimitedDepth ? nlohmann::json(nullptr) : nlohmann::json(max_depth);
}
inline int depth_from_json(const nlohmann::json& j) { return j.is_null() ? kUnlimitedDepth : j.get<int>(); }

inline void to_json(nlohmann::json& j, const ForestHyperparams& hp) {
    j = {{"n_trees", hp.n_trees}, {"max_depth", depth_to_json(hp.max_depth)}, {"min_leaf", hp.min_leaf},
         {"mtry", hp.mtry},       {"bootstrap", hp.bootstrap},               {"seed", hp.seed}};
}
inline void from_json(const nlohmann::json& j, ForestHyperparams& hp) {
    j.at("n_trees").get_to(hp.n_trees);
    hp.max_depth = depth_from_json(j.at("max_depth"));
    j.at("min_leaf").get_to(hp.min_leaf);
    j.at("mtry").get_to(hp.mtry);
    j.at("bootstrap").get_to(hp.bootstrap);
    j.at("seed").get_to(hp.seed);
}

namespace detail {

inline nlohmann::json node_to_json(const DecisionTree& tree, std::int32_t at) {
    const auto& node = tree.nodes()[at];
    if (node.is_leaf()) {
        const auto counts = tree.leaf_counts(node.left);
        return {{"counts", std::vector<std::uint32_t>(counts.begin(), counts.end())}};
    }
    return {{"feature", node.feature},
            {"threshold", node.threshold},
            {"left", node_to_json(tree, node.left)},
            {"right", node_to_json(tree, node.right)}};
}

inline std::int32_t node_from_json(const nlohmann::json& j, DecisionTree& tree, std::size_t n_features) {
    if (j.contains("counts")) {
        const auto counts = j.at("counts").get<std::vector<std::uint32_t>>();
        if (counts.size() != tree.n_classes()) throw data_error("model: leaf count vector length != number of classes");
        if (std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}) == 0) throw data_error("model: empty leaf");
        return tree.add_leaf(counts);
    }
    const auto feature = j.at("feature").get<std::int32_t>();
    if (feature < 0 || static_cast<std::size_t>(feature) >= n_features) throw data_error("model: feature index out of range");
    const std::int32_t node = tree.add_split(feature, j.at("threshold").get<double>());
    const std::int32_t left = node_from_json(j.at("left"), tree, n_features);
    const std::int32_t right = node_from_json(j.at("right"), tree, n_features);
    tree.set_children(node, left, right);
    return node;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) trees.push_back(detail::node_to_json(t, 0));
    return {{"format", "padex-forest"},
            {"version", kModelFormatVersion},
            {"n_features", model.n_features},
            {"hyperparams", model.hyperparams},
            {"classes", model.classes},
            {"trees", std::move(trees)}};
}

inline ForestModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "padex-forest") throw data_error("model: not a padex forest file");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw data_error("model: incompatible format version " + std::to_string(version) + " (this build reads version " +
                             std::to_string(kModelFormatVersion) + ")");
        ForestModel model;
        model.n_features = j.at("n_features").get<std::size_t>();
        model.hyperparams = j.at("hyperparams").get<ForestHyperparams>();
        model.classes = j.at("classes").get<std::vector<std::uint64_t>>();
        if (model.classes.empty() || !std::is_sorted(model.classes.begin(), model.classes.end()))
            throw data_error("model: classes must be non-empty and ascending");
        for (const auto& tj : j.at("trees")) {
            DecisionTree tree(model.classes.size());
            detail::node_from_json(tj, tree, model.n_features);
            model.trees.push_back(std::move(tree));
        }
        if (model.trees.empty()) throw data_error("model: no trees");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("model: schema mismatch: ") + e.what());
    }
}

inline void save_model(const ForestModel& model, const std::filesystem::path& path) {
    write_text_file(path, model_to_json(model).dump() + "\n");
}

inline ForestModel load_model(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(path.string() + ": corrupted model file: " + e.what());
    }
    return model_from_json(j);
}

}  // namespace padex
