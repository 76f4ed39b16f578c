// padex command-line front end.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "padex/config.hpp"
#include "padex/diagnose.hpp"
#include "padex/pipeline.hpp"

namespace fs = std::filesystem;
using namespace padex;

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<double> level;
    unsigned jobs = 1;
};

struct IoFlags {
    std::string data;
    std::string test;
    std::string train;
    std::string model;
    std::string deployed;
    std::string name;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration");
    cmd->add_option("--out", f.out, "output directory (default: $PADEX_OUT, then the config's output_dir)");
    cmd->add_option("--seed", f.seed, "master seed for generate/pipeline, replicate seed for the other commands");
    cmd->add_option("--level", f.level, "poison level in [0, 0.5)");
    cmd->add_option("--jobs", f.jobs, "worker threads; 0 uses every core")->check(CLI::NonNegativeNumber);
}

struct Context {
    RunConfig cfg;
    fs::path out;
    unsigned jobs = 1;
    std::uint64_t replicate_seed = 0;

    fs::path in_out(const std::string& given, const char* fallback) const {
        return given.empty() ? out / fallback : fs::path(given);
    }
};

Context resolve(const CommonFlags& f, bool seed_is_master) {
    Context ctx;
    if (!f.config.empty()) ctx.cfg = load_run_config(f.config);
    if (!f.out.empty()) ctx.out = f.out;
    else if (const char* env = std::getenv("PADEX_OUT"); env && *env) ctx.out = env;
    else ctx.out = ctx.cfg.output_dir;
    ctx.cfg.output_dir = ctx.out.string();

    ctx.replicate_seed = default_replicate_seed(ctx.cfg);
    if (f.seed) {
        if (seed_is_master) ctx.cfg.seed = *f.seed;
        else ctx.replicate_seed = *f.seed;
    }
    if (f.level) {
        PoisonConfig{*f.level}.validate();
        ctx.cfg.poison_levels = {*f.level};
    }
    ctx.cfg.validate();
    ctx.jobs = f.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : f.jobs;

    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw data_error("cannot create output directory " + ctx.out.string() + ": " + ec.message());
    return ctx;
}

int cmd_generate(const Context& ctx) {
    const auto& c = ctx.cfg;
    const Dataset ds = generate(c.dataset_size, c.agents, c.grid_side, c.payoff, c.solver, c.seed, ctx.jobs);
    const Split sp = split(ds, c.test_fraction, c.seed);
    save_csv(ds, ctx.out / "dataset.csv");
    save_csv(sp.train, ctx.out / "train.csv");
    save_csv(sp.test, ctx.out / "test.csv");
    write_text_file(ctx.out / "split.json", nlohmann::json(sp).dump(2) + "\n");
    std::printf("generate: %zu rows (N=%zu, G=%d, seed=%llu), train %zu / test %zu -> %s\n", ds.rows(), c.agents,
                c.grid_side, static_cast<unsigned long long>(c.seed), sp.train.rows(), sp.test.rows(),
                (ctx.out / "dataset.csv").string().c_str());
    return 0;
}

int cmd_train(const Context& ctx, const IoFlags& io) {
    const Dataset train_set = load_csv(ctx.in_out(io.data, "train.csv"));
    ForestHyperparams hp = ctx.cfg.forest;
    hp.seed = SeedLineage::from(ctx.replicate_seed).forest;
    const ForestModel model = train(train_set, hp, ctx.jobs);
    const fs::path target = ctx.out / (io.name.empty() ? "model.json" : io.name);
    save_model(model, target);

    const fs::path test_path = ctx.in_out(io.test, "test.csv");
    std::string acc = "n/a";
    if (fs::exists(test_path)) acc = std::to_string(accuracy(model, load_csv(test_path)));
    std::printf("train: %zu trees on %zu rows, held-out accuracy %s -> %s\n", model.trees.size(), train_set.rows(),
                acc.c_str(), target.string().c_str());
    return 0;
}

std::string level_tag(double level) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", level);
    return buf;
}

int cmd_poison(const Context& ctx, const CommonFlags& f, const IoFlags& io) {
    if (!f.level) throw invalid_argument("poison: --level is required");
    const Dataset train_set = load_csv(ctx.in_out(io.data, "train.csv"));
    const PoisonConfig pc{*f.level, poison_seed(ctx.replicate_seed, *f.level), ctx.cfg.max_resample, ctx.cfg.poison_prior};
    PoisonStats stats;
    const Dataset out = poison(train_set, pc, ctx.cfg.payoff, ctx.cfg.solver, &stats, ctx.jobs);
    const fs::path target = ctx.out / (io.name.empty() ? "train_poison_" + level_tag(*f.level) + ".csv" : io.name);
    save_csv(out, target);
    std::printf("poison: level %s, %zu rows injected (%zu fallback), %zu total -> %s\n", level_tag(*f.level).c_str(),
                stats.injected, stats.fallback, out.rows(), target.string().c_str());
    return 0;
}

ExplainOptions explain_options(const Context& ctx) {
    ExplainOptions opts;
    opts.method = ctx.cfg.explain_method;
    opts.permutations = ctx.cfg.permutations;
    opts.seed = SeedLineage::from(ctx.replicate_seed).explain;
    opts.jobs = ctx.jobs;
    return opts;
}

BackgroundSet background(const Context& ctx, const IoFlags& io) {
    const Dataset train_set = load_csv(ctx.in_out(io.train, "train.csv"));
    return sample_background(train_set, ctx.cfg.background_size, SeedLineage::from(ctx.replicate_seed).background);
}

int cmd_explain(const Context& ctx, const IoFlags& io) {
    const ForestModel model = load_model(ctx.in_out(io.model, "model.json"));
    const Dataset test = load_csv(ctx.in_out(io.data, "test.csv"));
    if (test.dim() != model.n_features)
        throw data_error("explain: data has " + std::to_string(test.dim()) + " features, model expects " +
                         std::to_string(model.n_features));
    const BackgroundSet bg = background(ctx, io);
    const std::size_t k = std::min(ctx.cfg.fingerprint_samples, test.rows());
    Matrix panel(0, test.dim());
    for (std::size_t r = 0; r < k; ++r) panel.append_row(test.features.row(r));
    const ShapFingerprint fp = fingerprint(model, panel, bg, explain_options(ctx));
    const fs::path target = ctx.out / (io.name.empty() ? "attributions.csv" : io.name);
    save_attributions_csv(fp, test.dim(), target);
    std::printf("explain: %zu samples, %s method, background %zu rows -> %s\n", k, to_string(ctx.cfg.explain_method),
                bg.rows.rows(), target.string().c_str());
    return 0;
}

int cmd_diagnose(const Context& ctx, const IoFlags& io) {
    if (io.deployed.empty()) throw invalid_argument("diagnose: --deployed MODEL is required");
    const ForestModel clean = load_model(ctx.in_out(io.model, "model.json"));
    const ForestModel deployed = load_model(io.deployed);
    const Dataset test = load_csv(ctx.in_out(io.data, "test.csv"));
    const BackgroundSet bg = background(ctx, io);
    const std::size_t k = std::min(ctx.cfg.fingerprint_samples, test.rows());
    const auto opts = explain_options(ctx);
    const auto fp_clean = behavior_fingerprint(clean, test, k, bg, opts);
    const auto fp_deployed = behavior_fingerprint(deployed, test, k, bg, opts);
    const DiagnosisReport report = compare(fp_clean, fp_deployed, ctx.cfg.alpha);

    nlohmann::json j = report;
    j["clean"] = fingerprint_json(fp_clean);
    j["deployed"] = fingerprint_json(fp_deployed);
    const fs::path target = ctx.out / (io.name.empty() ? "report.json" : io.name);
    write_text_file(target, j.dump(2) + "\n");
    std::printf("diagnose: U=%.1f p=%.4g tv=%.4f accuracy %.4f -> %.4f, verdict %s -> %s\n", report.u_result.u,
                report.u_result.p_two_sided, report.tv_shift, report.accuracy_clean, report.accuracy_deployed,
                to_string(report.verdict), target.string().c_str());
    return 0;
}

int cmd_pipeline(const Context& ctx) {
    const PipelineResult r = run_pipeline(ctx.cfg, ctx.out, ctx.jobs);
    std::size_t flagged = 0;
    for (const auto& row : r.sweep.rows) flagged += row.report.verdict == Verdict::poisoned;
    std::printf("pipeline: %zu sweep rows (%zu flagged poisoned), %.1fs -> %s\n", r.sweep.rows.size(), flagged,
                r.wall_seconds, (ctx.out / "sweep.csv").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"padex: poisoning diagnosis for coalition-forming swarms"};
    app.require_subcommand(1);

    CommonFlags flags;
    IoFlags io;
    auto* gen = app.add_subcommand("generate", "solve random swarm instances and write dataset/train/test CSVs");
    auto* trn = app.add_subcommand("train", "train a random forest on a dataset CSV");
    auto* poi = app.add_subcommand("poison", "append poisoned rows to a training CSV");
    auto* exp = app.add_subcommand("explain", "write SHAP attributions for test samples");
    auto* dia = app.add_subcommand("diagnose", "compare a clean and a deployed model's fingerprints");
    auto* pipe = app.add_subcommand("pipeline", "run generate, train and the full poison severity sweep");
    for (auto* cmd : {gen, trn, poi, exp, dia, pipe}) add_common(cmd, flags);

    trn->add_option("--data", io.data, "training CSV (default: OUT/train.csv)");
    trn->add_option("--test", io.test, "held-out CSV for the accuracy line (default: OUT/test.csv)");
    trn->add_option("--name", io.name, "output file name inside OUT (default: model.json)");
    poi->add_option("--data", io.data, "clean training CSV (default: OUT/train.csv)");
    poi->add_option("--name", io.name, "output file name inside OUT");
    exp->add_option("--model", io.model, "model JSON (default: OUT/model.json)");
    exp->add_option("--data", io.data, "samples to explain (default: OUT/test.csv)");
    exp->add_option("--train", io.train, "clean training CSV for the background (default: OUT/train.csv)");
    exp->add_option("--name", io.name, "output file name inside OUT (default: attributions.csv)");
    dia->add_option("--model", io.model, "benign model JSON (default: OUT/model.json)");
    dia->add_option("--deployed", io.deployed, "deployed model JSON to diagnose")->required();
    dia->add_option("--data", io.data, "test CSV (default: OUT/test.csv)");
    dia->add_option("--train", io.train, "clean training CSV for the background (default: OUT/train.csv)");
    dia->add_option("--name", io.name, "output file name inside OUT (default: report.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        const bool master = gen->parsed() || pipe->parsed();
        const Context ctx = resolve(flags, master);
        if (gen->parsed()) return cmd_generate(ctx);
        if (trn->parsed()) return cmd_train(ctx, io);
        if (poi->parsed()) return cmd_poison(ctx, flags, io);
        if (exp->parsed()) return cmd_explain(ctx, io);
        if (dia->parsed()) return cmd_diagnose(ctx, io);
        return cmd_pipeline(ctx);
    } catch (const Error& e) {
        std::cerr << "padex: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "padex: " << e.what() << "\n";
        return 2;
    }
}
