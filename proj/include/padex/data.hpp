// Labeled datasets of solved swarm instances: generation, splitting and CSV
// persistence with a JSON metadata sidecar.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "padex/common.hpp"
#include "padex/game.hpp"
#include "padex/solver.hpp"

namespace padex {

struct DatasetMeta {
    std::size_t agents = 0;
    int grid_side = 0;
    PayoffParams payoff;
    SolverConfig solver;
    std::uint64_t seed = 0;
    double poison_level = 0.0;

    friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

inline void to_json(nlohmann::json& j, const PayoffParams& p) {
    j = {{"lambda", p.lambda}, {"beta", p.beta}, {"kappa", p.kappa}, {"eps_dist", p.eps_dist}};
}
inline void from_json(const nlohmann::json& j, PayoffParams& p) {
    j.at("lambda").get_to(p.lambda);
    j.at("beta").get_to(p.beta);
    j.at("kappa").get_to(p.kappa);
    j.at("eps_dist").get_to(p.eps_dist);
}
inline void to_json(nlohmann::json& j, const SolverConfig& c) {
    j = {{"eta", c.eta},           {"rho", c.rho},
         {"eps_conv", c.eps_conv}, {"max_iters", c.max_iters},
         {"init_jitter", c.init_jitter}, {"mc_samples", c.mc_samples}};
}
inline void from_json(const nlohmann::json& j, SolverConfig& c) {
    j.at("eta").get_to(c.eta);
    j.at("rho").get_to(c.rho);
    j.at("eps_conv").get_to(c.eps_conv);
    j.at("max_iters").get_to(c.max_iters);
    j.at("init_jitter").get_to(c.init_jitter);
    j.at("mc_samples").get_to(c.mc_samples);
}
inline void to_json(nlohmann::json& j, const DatasetMeta& m) {
    j = {{"agents", m.agents}, {"grid_side", m.grid_side}, {"payoff", m.payoff},
         {"solver", m.solver}, {"seed", m.seed},           {"poison_level", m.poison_level}};
}
inline void from_json(const nlohmann::json& j, DatasetMeta& m) {
    j.at("agents").get_to(m.agents);
    j.at("grid_side").get_to(m.grid_side);
    j.at("payoff").get_to(m.payoff);
    j.at("solver").get_to(m.solver);
    j.at("seed").get_to(m.seed);
    j.at("poison_level").get_to(m.poison_level);
}

/// Features are agent-major: x0, y0, x1, y1, ...
struct Dataset {
    Matrix features;
    std::vector<std::uint64_t> labels;
    std::vector<std::uint8_t> poisoned;
    DatasetMeta meta;

    std::size_t rows() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    void append(std::span<const double> x, std::uint64_t label, bool is_poisoned) {
        features.append_row(x);
        labels.push_back(label);
        poisoned.push_back(is_poisoned ? 1 : 0);
    }

    void validate() const {
        if (features.rows() != labels.size() || poisoned.size() != labels.size())
            throw data_error("Dataset: row counts differ between features, labels and flags");
        if (meta.agents != 0 && features.cols() != 2 * meta.agents && !labels.empty())
            throw data_error("Dataset: feature width is not 2N");
        const double hi = meta.grid_side - 1;
        if (meta.grid_side > 0)
            for (double v : features.data())
                if (!(v >= 0.0 && v <= hi)) throw data_error("Dataset: feature outside the grid");
        if (meta.agents != 0 && meta.agents < 64)
            for (auto l : labels)
                if (l >> meta.agents) throw data_error("Dataset: label bitmask exceeds 2^N");
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Position grid_center(int grid_side) {
    const double c = (grid_side - 1) / 2.0;
    return {c, c};
}

inline SwarmInstance sample_instance(std::size_t agents, int grid_side, Rng& rng) {
    std::uniform_int_distribution<int> cell(0, grid_side - 1);
    SwarmInstance inst;
    inst.grid_side = grid_side;
    inst.poi = grid_center(grid_side);
    inst.agents.reserve(agents);
    for (std::size_t i = 0; i < agents; ++i) {
        const double x = cell(rng);
        const double y = cell(rng);
        inst.agents.push_back({x, y});
    }
    return inst;
}

inline SwarmInstance instance_from_features(std::span<const double> x, int grid_side) {
    SwarmInstance inst;
    inst.grid_side = grid_side;
    inst.poi = grid_center(grid_side);
    for (std::size_t i = 0; i + 1 < x.size(); i += 2) inst.agents.push_back({x[i], x[i + 1]});
    return inst;
}

inline std::vector<double> instance_features(const SwarmInstance& inst) {
    std::vector<double> x;
    x.reserve(2 * inst.size());
    for (const Position& a : inst.agents) {
        x.push_back(a.x);
        x.push_back(a.y);
    }
    return x;
}

/// The label a clean dataset with this master seed assigns to an instance.
inline GameSolution label_instance(const SwarmInstance& inst, const PayoffParams& params, const SolverConfig& cfg,
                                   std::uint64_t master_seed) {
    return solve(inst, params, cfg, instance_seed(inst, master_seed));
}

/// A solution is usable as a label when the dynamics settled and the settled
/// coalition survives the unilateral-deviation check.
inline bool usable_label(const GameSolution& sol, const SwarmInstance& inst, const PayoffParams& params) {
    return sol.converged && is_nash_stable(sol.coalition, inst, params);
}

/// Solves random instances until n usable rows exist. Attempt k draws its
/// instance from mix_seed(seed, k), and accepted rows keep attempt order, so
/// the result does not depend on `jobs`.
inline Dataset generate(std::size_t n, std::size_t agents, int grid_side, const PayoffParams& params,
                        const SolverConfig& cfg, std::uint64_t seed, unsigned jobs = 1) {
    if (n < 1) throw invalid_argument("generate: n must be >= 1");
    if (agents < 1 || agents > kMaxAgents) throw invalid_argument("generate: N must be in [1, 63]");
    if (grid_side < 2) throw invalid_argument("generate: G must be >= 2");
    params.validate();
    cfg.validate();

    Dataset ds;
    ds.meta = {agents, grid_side, params, cfg, seed, 0.0};
    ds.features = Matrix(0, 2 * agents);
    const std::size_t budget = 10 * n;

    struct Attempt {
        std::vector<double> x;
        std::uint64_t label = 0;
        bool usable = false;
    };
    std::size_t next_attempt = 0;
    while (ds.rows() < n) {
        if (next_attempt >= budget)
            throw data_error("generate: retry budget of " + std::to_string(budget) + " attempts exhausted with only " +
                             std::to_string(ds.rows()) + " of " + std::to_string(n) +
                             " instances converged to a stable coalition");
        const std::size_t remaining = n - ds.rows();
        const std::size_t chunk = std::min(budget - next_attempt, remaining + remaining / 8 + 16);
        std::vector<Attempt> results(chunk);
        parallel_for(chunk, jobs, [&](std::size_t k) {
            Rng rng(mix_seed(seed, next_attempt + k));
            const SwarmInstance inst = sample_instance(agents, grid_side, rng);
            const GameSolution sol = label_instance(inst, params, cfg, seed);
            results[k] = {instance_features(inst), sol.coalition.bits(), usable_label(sol, inst, params)};
        });
        next_attempt += chunk;
        for (const Attempt& a : results) {
            if (ds.rows() == n) break;
            if (a.usable) ds.append(a.x, a.label, false);
        }
    }
    return ds;
}

struct Split {
    Dataset train;
    Dataset test;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    std::vector<std::size_t> train_rows;  // indices into the source dataset
    std::vector<std::size_t> test_rows;
};

inline Dataset select_rows(const Dataset& ds, std::span<const std::size_t> rows) {
    Dataset out;
    out.meta = ds.meta;
    out.features = Matrix(0, ds.dim());
    for (std::size_t r : rows) out.append(ds.features.row(r), ds.labels[r], ds.poisoned[r] != 0);
    return out;
}

inline Split split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw invalid_argument("split: test_fraction must be in (0, 1)");
    if (ds.rows() < 2) throw invalid_argument("split: need at least 2 rows");
    const auto n = ds.rows();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (n_test == 0 || n_test == n)
        throw invalid_argument("split: fraction " + std::to_string(test_fraction) + " leaves one side empty for " +
                               std::to_string(n) + " rows");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    Split out;
    out.test_fraction = test_fraction;
    out.seed = seed;
    out.test_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(out.test_rows.begin(), out.test_rows.end());
    std::sort(out.train_rows.begin(), out.train_rows.end());
    out.train = select_rows(ds, out.train_rows);
    out.test = select_rows(ds, out.test_rows);
    return out;
}

// CSV persistence ------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::filesystem::path meta_path(const std::filesystem::path& csv) {
    return std::filesystem::path(csv.string() + ".meta.json");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw data_error("write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open " + path.string() + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string csv_header(std::size_t agents) {
    std::string h;
    for (std::size_t i = 0; i < agents; ++i) h += "x" + std::to_string(i) + ",y" + std::to_string(i) + ",";
    return h + "label,poisoned";
}

inline void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    if (ds.dim() % 2 != 0) throw invalid_argument("save_csv: feature width must be even");
    std::string text = csv_header(ds.dim() / 2) + "\n";
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        for (double v : ds.features.row(r)) text += format_double(v) + ",";
        text += std::to_string(ds.labels[r]) + "," + (ds.poisoned[r] ? "1" : "0") + "\n";
    }
    write_text_file(path, text);
    write_text_file(meta_path(path), nlohmann::json(ds.meta).dump(2) + "\n");
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string cell_error(const std::filesystem::path& path, std::size_t row, std::size_t col,
                              const std::string& why) {
    return path.string() + ": row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + why;
}

}  // namespace detail

/// Loads a dataset CSV. Row numbers in errors count data rows from 1; the
/// metadata sidecar is read when present.
inline Dataset load_csv(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw data_error(path.string() + ": empty file, missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_fields(line);
    if (header.size() < 4 || header.size() % 2 != 0)
        throw data_error(path.string() + ": malformed header '" + line + "'");
    const std::size_t agents = (header.size() - 2) / 2;
    if (line != csv_header(agents)) throw data_error(path.string() + ": malformed header '" + line + "'");
    if (agents >= 64) throw data_error(path.string() + ": too many agents in header");

    Dataset ds;
    ds.features = Matrix(0, 2 * agents);
    ds.meta.agents = agents;
    if (std::filesystem::exists(meta_path(path))) {
        try {
            ds.meta = nlohmann::json::parse(read_text_file(meta_path(path))).get<DatasetMeta>();
        } catch (const nlohmann::json::exception& e) {
            throw data_error(meta_path(path).string() + ": invalid metadata: " + e.what());
        }
        if (ds.meta.agents != agents) throw data_error(path.string() + ": header and metadata disagree on N");
    }

    std::vector<double> row(2 * agents);
    std::size_t row_no = 0;
    bool saw_newline_at_end = text.empty() || text.back() == '\n';
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw data_error(detail::cell_error(path, row_no, 1, "empty row"));
        const auto fields = detail::split_fields(line);
        if (fields.size() != header.size())
            throw data_error(detail::cell_error(path, row_no, std::min(fields.size(), header.size()) + 1,
                                                "expected " + std::to_string(header.size()) + " cells, found " +
                                                    std::to_string(fields.size())));
        for (std::size_t c = 0; c < 2 * agents; ++c) {
            const auto f = fields[c];
            const auto res = std::from_chars(f.data(), f.data() + f.size(), row[c]);
            if (res.ec != std::errc{} || res.ptr != f.data() + f.size() || !std::isfinite(row[c]))
                throw data_error(detail::cell_error(path, row_no, c + 1, "non-numeric cell '" + std::string(f) + "'"));
            if (ds.meta.grid_side > 0 && (row[c] < 0 || row[c] > ds.meta.grid_side - 1))
                throw data_error(detail::cell_error(path, row_no, c + 1, "coordinate outside the grid"));
        }
        std::uint64_t label = 0;
        const auto lf = fields[2 * agents];
        const auto lres = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (lres.ec != std::errc{} || lres.ptr != lf.data() + lf.size())
            throw data_error(detail::cell_error(path, row_no, 2 * agents + 1, "non-numeric label '" + std::string(lf) + "'"));
        if (label >> agents)
            throw data_error(detail::cell_error(path, row_no, 2 * agents + 1,
                                                "label " + std::to_string(label) + " >= 2^" + std::to_string(agents)));
        const auto pf = fields[2 * agents + 1];
        if (pf != "0" && pf != "1")
            throw data_error(detail::cell_error(path, row_no, 2 * agents + 2, "poisoned flag must be 0 or 1"));
        ds.append(row, label, pf == "1");
    }
    if (!saw_newline_at_end) throw data_error(path.string() + ": truncated file, last row " + std::to_string(row_no) + " has no line ending");
    return ds;
}

inline void to_json(nlohmann::json& j, const Split& s) {
    j = {{"test_fraction", s.test_fraction}, {"seed", s.seed}, {"train_rows", s.train_rows}, {"test_rows", s.test_rows}};
}

}  // namespace padex
