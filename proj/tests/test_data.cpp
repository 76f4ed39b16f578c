#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <cmath>
#include <set>
#include <string>

#include "padex/data.hpp"
#include "support.hpp"

using namespace padex;
using padex::testing::TempDir;

namespace {

Dataset small_dataset(std::uint64_t seed = 42, unsigned jobs = 1) {
    return generate(100, 5, 20, PayoffParams::defaults_for_grid(20), SolverConfig{}, seed, jobs);
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no padex::Error thrown";
    return ErrorKind::invalid_argument;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Generate, RejectsBadArguments) {
    const PayoffParams p;
    EXPECT_EQ(kind_of([&] { generate(0, 5, 20, p, {}, 1); }), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of([&] { generate(10, 0, 20, p, {}, 1); }), ErrorKind::invalid_argument);
    EXPECT_EQ(kind_of([&] { generate(10, 5, 1, p, {}, 1); }), ErrorKind::invalid_argument);
}

TEST(Generate, ReproducibleAndIndependentOfJobs) {
    const Dataset a = small_dataset();
    const Dataset b = small_dataset();
    const Dataset c = small_dataset(42, 4);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    EXPECT_NE(a, small_dataset(43));

    TempDir dir("gen");
    save_csv(a, dir / "a.csv");
    save_csv(b, dir / "b.csv");
    EXPECT_EQ(read_text_file(dir / "a.csv"), read_text_file(dir / "b.csv"));
}

TEST(Generate, RowsAreStableSolverLabelsOnTheLattice) {
    const Dataset ds = small_dataset();
    const PayoffParams p = PayoffParams::defaults_for_grid(20);
    ASSERT_EQ(ds.rows(), 100U);
    ASSERT_EQ(ds.dim(), 10U);
    EXPECT_EQ(ds.meta.agents, 5U);
    EXPECT_EQ(ds.meta.grid_side, 20);
    EXPECT_EQ(ds.meta.seed, 42U);
    EXPECT_EQ(ds.meta.poison_level, 0.0);
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        EXPECT_EQ(ds.poisoned[r], 0);
        EXPECT_LT(ds.labels[r], 32U);
        for (double v : ds.features.row(r)) {
            EXPECT_EQ(v, std::floor(v));
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 19.0);
        }
        const SwarmInstance inst = instance_from_features(ds.features.row(r), 20);
        EXPECT_EQ(inst.poi, (Position{9.5, 9.5}));
        EXPECT_TRUE(is_nash_stable(Coalition(ds.labels[r]), inst, p)) << "row " << r;
        EXPECT_EQ(label_instance(inst, p, ds.meta.solver, 42).coalition.bits(), ds.labels[r]);
    }
}

TEST(Generate, FailsWhenTheRetryBudgetRunsOut) {
    SolverConfig cfg;
    cfg.max_iters = 1;
    EXPECT_EQ(kind_of([&] { generate(20, 5, 20, PayoffParams{}, cfg, 1); }), ErrorKind::data);
}

TEST(Features, AgentMajorLayout) {
    SwarmInstance inst;
    inst.grid_side = 20;
    inst.poi = grid_center(20);
    inst.agents = {{1, 2}, {3, 4}, {5, 6}};
    EXPECT_EQ(instance_features(inst), (std::vector<double>{1, 2, 3, 4, 5, 6}));
    const auto back = instance_from_features(instance_features(inst), 20);
    EXPECT_EQ(back.agents, inst.agents);
    EXPECT_EQ(csv_header(2), "x0,y0,x1,y1,label,poisoned");
}

TEST(Split, EightTwoOnTenRows) {
    const Dataset ds = generate(10, 3, 20, PayoffParams{}, SolverConfig{}, 5);
    const Split sp = split(ds, 0.2, 9);
    EXPECT_EQ(sp.train.rows(), 8U);
    EXPECT_EQ(sp.test.rows(), 2U);
}

TEST(Split, PartitionIsDisjointCompleteAndSeeded) {
    const Dataset ds = small_dataset();
    const Split a = split(ds, 0.2, 7);
    std::set<std::size_t> seen(a.train_rows.begin(), a.train_rows.end());
    for (auto r : a.test_rows) EXPECT_TRUE(seen.insert(r).second) << "row " << r << " on both sides";
    EXPECT_EQ(seen.size(), ds.rows());
    EXPECT_EQ(*seen.rbegin(), ds.rows() - 1);
    for (std::size_t k = 0; k < a.test_rows.size(); ++k) {
        EXPECT_EQ(a.test.labels[k], ds.labels[a.test_rows[k]]);
        EXPECT_TRUE(std::ranges::equal(a.test.features.row(k), ds.features.row(a.test_rows[k])));
    }

    const Split b = split(ds, 0.2, 7);
    EXPECT_EQ(a.test_rows, b.test_rows);
    EXPECT_EQ(a.train, b.train);
    EXPECT_NE(a.test_rows, split(ds, 0.2, 8).test_rows);
}

TEST(Split, RejectsDegenerateSides) {
    const Dataset ds = generate(10, 3, 20, PayoffParams{}, SolverConfig{}, 5);
    EXPECT_THROW(split(ds, 0.01, 1), Error);
    EXPECT_THROW(split(ds, 0.99, 1), Error);
    EXPECT_THROW(split(ds, 0.0, 1), Error);
    EXPECT_THROW(split(ds, 1.0, 1), Error);
}

TEST(Csv, RoundTripIsExact) {
    TempDir dir("csv");
    const Dataset ds = small_dataset();
    save_csv(ds, dir / "ds.csv");
    EXPECT_EQ(load_csv(dir / "ds.csv"), ds);

    Dataset odd;
    odd.meta.agents = 1;
    odd.meta.grid_side = 20;
    odd.features = Matrix(0, 2);
    odd.append(std::vector<double>{1.0 / 3.0, 2.0 / 7.0}, 1, true);
    odd.append(std::vector<double>{0.1, 18.999999999999996}, 0, false);
    save_csv(odd, dir / "odd.csv");
    EXPECT_EQ(load_csv(dir / "odd.csv"), odd);
}

TEST(Csv, HandWrittenFixtureLoads) {
    const Dataset ds = load_csv(std::filesystem::path(PADEX_FIXTURE_DIR) / "two_rows.csv");
    ASSERT_EQ(ds.rows(), 2U);
    ASSERT_EQ(ds.dim(), 4U);
    EXPECT_EQ(ds.features.data(), (std::vector<double>{1, 2, 3.5, 4, 0, 19, 7.25, 0.5}));
    EXPECT_EQ(ds.labels, (std::vector<std::uint64_t>{3, 2}));
    EXPECT_EQ(ds.poisoned, (std::vector<std::uint8_t>{0, 1}));
    EXPECT_EQ(ds.meta.agents, 2U);
}

TEST(Csv, TruncatedFileIsRejected) {
    TempDir dir("trunc");
    save_csv(small_dataset(), dir / "ds.csv");
    std::string text = read_text_file(dir / "ds.csv");
    write_text_file(dir / "cut.csv", text.substr(0, text.size() - 7));
    std::filesystem::copy_file(meta_path(dir / "ds.csv"), meta_path(dir / "cut.csv"));
    EXPECT_EQ(kind_of([&] { load_csv(dir / "cut.csv"); }), ErrorKind::data);
    write_text_file(dir / "nolf.csv", text.substr(0, text.size() - 1));
    EXPECT_EQ(kind_of([&] { load_csv(dir / "nolf.csv"); }), ErrorKind::data);
}

TEST(Csv, ErrorsNameRowAndColumn) {
    TempDir dir("bad");
    write_text_file(dir / "label.csv", "x0,y0,x1,y1,label,poisoned\n1,2,3,4,1,0\n1,2,3,4,4,0\n");
    const auto label_msg = message_of([&] { load_csv(dir / "label.csv"); });
    EXPECT_NE(label_msg.find("row 2, column 5"), std::string::npos) << label_msg;
    EXPECT_NE(label_msg.find(">= 2^2"), std::string::npos) << label_msg;

    write_text_file(dir / "cell.csv", "x0,y0,label,poisoned\n1,abc,1,0\n");
    const auto cell_msg = message_of([&] { load_csv(dir / "cell.csv"); });
    EXPECT_NE(cell_msg.find("row 1, column 2"), std::string::npos) << cell_msg;

    write_text_file(dir / "header.csv", "x0,y0,lbl,poisoned\n1,1,1,0\n");
    EXPECT_EQ(kind_of([&] { load_csv(dir / "header.csv"); }), ErrorKind::data);

    write_text_file(dir / "flag.csv", "x0,y0,label,poisoned\n1,1,1,2\n");
    EXPECT_EQ(kind_of([&] { load_csv(dir / "flag.csv"); }), ErrorKind::data);

    write_text_file(dir / "short.csv", "x0,y0,label,poisoned\n1,1,1\n");
    EXPECT_EQ(kind_of([&] { load_csv(dir / "short.csv"); }), ErrorKind::data);

    EXPECT_EQ(kind_of([&] { load_csv(dir / "missing.csv"); }), ErrorKind::data);
}

TEST(Csv, MetadataSidecarRoundTrips) {
    TempDir dir("meta");
    Dataset ds = small_dataset();
    ds.meta.poison_level = 0.25;
    save_csv(ds, dir / "ds.csv");
    ASSERT_TRUE(std::filesystem::exists(dir / "ds.csv.meta.json"));
    EXPECT_EQ(load_csv(dir / "ds.csv").meta, ds.meta);
}
