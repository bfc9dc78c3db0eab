#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "test_support.hpp"

using namespace condest;
using namespace condest::bench;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("condest_bench_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Config tiny_config(const fs::path& dir) {
    Config c;
    c.seed = 11;
    c.train.seed = 11;
    c.output_dir = dir;
    c.counts = {8, 3, 3};
    c.n_range = {16, 36};
    c.model.hidden_dim = 8;
    c.model.gcn_layers = 2;
    c.model.head_widths = {8, 4};
    c.train.epochs = 3;
    c.train.batch_size = 4;
    c.timing = false;
    c.gk_iterations = {4, 8};
    return c;
}

MethodRecord rec(const std::string& m, int norm, double lre, bool ok = true, double t = std::nan("")) {
    MethodRecord r;
    r.method = m;
    r.norm = norm;
    r.lre = lre;
    r.ok = ok;
    r.time_ms = t;
    r.median_ms = t;
    return r;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CONDEST_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Lre, Examples) {
    EXPECT_EQ(compute_lre(1e6, 1e6), 0.0);
    EXPECT_NEAR(compute_lre(1e4, 1e6), 100.0 / 3.0, 1e-12);
    // a factor of two at 1e6
    EXPECT_NEAR(compute_lre(2e6, 1e6), 100.0 * std::log10(2.0) / 6.0, 1e-12);
    EXPECT_NEAR(compute_lre(2e6, 1e6), 5.017, 1e-3);
    EXPECT_THROW(compute_lre(0.0, 10.0), InvalidArgument);
    EXPECT_THROW(compute_lre(10.0, -1.0), InvalidArgument);
}

TEST(Lre, SymmetricInLogAndNonnegative) {
    CounterRng rng(1);
    for (int t = 0; t < 50; ++t) {
        const double k = std::pow(10.0, rng.uniform(0.5, 12.0));
        const double f = std::pow(10.0, rng.uniform(0.0, 2.0));
        EXPECT_NEAR(compute_lre(k * f, k), compute_lre(k / f, k), 1e-9);
        EXPECT_GE(compute_lre(k * f, k), 0.0);
    }
}

TEST(Aggregate, ExampleRows) {
    const std::vector<MethodRecord> rs = {rec("exact", 1, 0.0, true, 2.0), rec("hh", 1, 10.0, true, 1.0),
                                          rec("exact", 1, 0.0, true, 4.0), rec("hh", 1, 70.0, true, 3.0),
                                          rec("hh", 1, 0.0, false, 100.0), rec("hh", 2, 120.0)};
    const auto rows = aggregate(rs);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].method, "exact");
    EXPECT_EQ(rows[0].lre_mean, 0.0);
    EXPECT_EQ(rows[0].acc_05, 100.0);
    EXPECT_EQ(rows[0].acc_10, 100.0);
    EXPECT_DOUBLE_EQ(rows[0].mean_time_ms, 3.0);

    EXPECT_EQ(rows[1].method, "hh");
    EXPECT_EQ(rows[1].count, 2u);
    EXPECT_EQ(rows[1].failures, 1u);
    EXPECT_DOUBLE_EQ(rows[1].lre_mean, 40.0);
    EXPECT_DOUBLE_EQ(rows[1].lre_max, 70.0);
    EXPECT_DOUBLE_EQ(rows[1].acc_05, 50.0);
    EXPECT_DOUBLE_EQ(rows[1].acc_10, 100.0);
    EXPECT_DOUBLE_EQ(rows[1].mean_time_ms, 2.0);

    EXPECT_EQ(rows[2].norm, 2);
    EXPECT_EQ(rows[2].acc_10, 0.0);
    EXPECT_TRUE(std::isnan(rows[2].mean_time_ms));
    EXPECT_THROW(aggregate({}), InvalidArgument);
}

TEST(Aggregate, AccuracyOrderingProperty) {
    CounterRng rng(2);
    std::vector<MethodRecord> rs;
    for (int i = 0; i < 200; ++i) rs.push_back(rec(i % 3 ? "a" : "b", 1 + i % 2, rng.uniform(0.0, 150.0)));
    for (const auto& r : aggregate(rs)) {
        EXPECT_LE(r.acc_05, r.acc_10);
        EXPECT_LE(r.lre_mean, r.lre_max);
        EXPECT_GE(r.acc_05, 0.0);
        EXPECT_LE(r.acc_10, 100.0);
    }
}

TEST(Timing, MeanMedianAndRunCount) {
    EXPECT_EQ(median_of({3, 1, 2}), 2.0);
    EXPECT_EQ(median_of({4, 1, 2, 3}), 2.5);
    EXPECT_TRUE(std::isnan(median_of({})));
    EXPECT_EQ(mean_of({1, 2, 6}), 3.0);

    int calls = 0;
    const auto s = time_method([&] { ++calls; }, 4);
    EXPECT_EQ(calls, 5);
    EXPECT_EQ(s.runs_ms.size(), 4u);
    const auto one = time_method([] {}, 1);
    EXPECT_EQ(one.runs_ms.size(), 1u);
    EXPECT_EQ(one.mean_ms, one.median_ms);
    EXPECT_THROW(time_method([] {}, 0), InvalidArgument);
}

TEST(Timing, SleepingStubMeasuresItsDuration) {
    const auto s = time_method([] { std::this_thread::sleep_for(std::chrono::milliseconds(5)); }, 3);
    EXPECT_GE(s.mean_ms, 5.0);
    EXPECT_LT(s.mean_ms, 50.0);
}

TEST(Config, DefaultsFromEmptyObject) {
    const Config c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.counts.train, 240);
    EXPECT_EQ(c.counts.val, 40);
    EXPECT_EQ(c.counts.test, 40);
    EXPECT_EQ(c.n_range[0], 100);
    EXPECT_EQ(c.n_range[1], 400);
    EXPECT_EQ(c.runs.size(), 4u);
    EXPECT_EQ(c.repeats, 4);
    EXPECT_EQ(c.train.epochs, 100);
    EXPECT_EQ(c.train.batch_size, 32);
    EXPECT_EQ(c.model.hidden_dim, 64u);
    EXPECT_EQ(c.effective_specs().size(), kAllClasses.size());
}

TEST(Config, OverridesAndSeedPropagation) {
    const auto j = nlohmann::json::parse(R"({
        "seed": 9, "output_dir": "out",
        "dataset": {"counts": {"train": 5, "val": 2, "test": 2}, "n_range": [20, 30]},
        "train": {"lr": 0.01, "epochs": 7},
        "runs": [{"scheme": "kappa", "norm": 2}],
        "bench": {"repeats": 2, "timing": false, "gk_iterations": [5]}
    })");
    const Config c = config_from_json(j);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.train.seed, 9u);
    EXPECT_EQ(c.counts.train, 5);
    EXPECT_EQ(c.train.lr, 0.01);
    EXPECT_EQ(c.train.epochs, 7);
    ASSERT_EQ(c.runs.size(), 1u);
    EXPECT_EQ(c.runs[0].scheme, Scheme::PredictKappa);
    EXPECT_EQ(c.runs[0].norm, 2);
    EXPECT_FALSE(c.timing);
    EXPECT_EQ(c.dataset_path(), fs::path("out") / "dataset");
    EXPECT_EQ(c.model_path(c.runs[0]), fs::path("out") / "models" / "kappa_norm2.json");
    EXPECT_EQ(history_path(c.model_path(c.runs[0])), fs::path("out") / "models" / "kappa_norm2.history.csv");

    const auto k = config_from_json(nlohmann::json::parse(R"({"seed": 9, "train": {"seed": 4}})"));
    EXPECT_EQ(k.train.seed, 4u);
}

TEST(Config, RejectsBadInput) {
    using nlohmann::json;
    EXPECT_THROW(config_from_json(json::parse(R"({"sede": 1})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train": {"learning_rate": 1}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"seed": "x"})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train": {"lr": -1}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"bench": {"repeats": 0}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"runs": [{"scheme": "kappa", "norm": 3}]})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"runs": [{"scheme": "other", "norm": 1}]})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"dataset": {"counts": {"test": 0}}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"dataset": {"n_range": [2, 10]}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse("[1, 2]")), ConfigError);

    const auto dir = fresh_dir("badcfg");
    EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    Config c = tiny_config("somewhere");
    c.runs = {{Scheme::PredictInverseNorm, 2}};
    const Config back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_EQ(back.model.head_widths, c.model.head_widths);
    EXPECT_EQ(back.gk_iterations, c.gk_iterations);
}

TEST(Evaluate, EmptyTestSplitIsConfigError) {
    const Config c = tiny_config(fresh_dir("empty"));
    std::vector<TrainedRun> models(1);
    models[0].params = init_model(c.model, 1);
    EXPECT_THROW(evaluate(c, {}, models), ConfigError);
    const Dataset ds = sample_dataset(c.effective_specs(), {1, 1, 1}, 3);
    std::vector<TrainedRun> none;
    EXPECT_THROW(evaluate(c, ds.test, none), ConfigError);
}

TEST(Evaluate, ExactRowAndStructure) {
    Config c = tiny_config(fresh_dir("structure"));
    c.timing = true;
    c.repeats = 1;
    const Dataset ds = sample_dataset(c.effective_specs(), {1, 1, 4}, 5);
    std::vector<TrainedRun> models;
    for (const auto& r : c.runs) {
        ModelConfig mc = c.model;
        mc.scheme = r.scheme;
        mc.norm = r.norm;
        models.push_back({r, init_model(mc, 2), {}});
    }
    const auto rep = evaluate(c, ds.test, models);
    // exact, 2 gnn, hh for norm 1; exact, 2 gnn, 2 gk for norm 2
    EXPECT_EQ(rep.rows.size(), 9u);
    EXPECT_EQ(rep.records.size(), 9u * ds.test.size());
    EXPECT_EQ(rep.feature_cost.size(), ds.test.size());
    for (const auto& row : rep.rows) {
        if (row.method != "exact") continue;
        EXPECT_EQ(row.lre_mean, 0.0);
        EXPECT_EQ(row.acc_05, 100.0);
        EXPECT_EQ(row.acc_10, 100.0);
    }
    for (const auto& r : rep.records) {
        if (!r.ok) continue;
        EXPECT_GT(r.kappa_hat, 0.0);
        EXPECT_GE(r.time_ms, 0.0);
        if (r.method.rfind("gnn_", 0) == 0) {
            // decomposition accounts for the measured total
            const double parts = r.t_feature_ms + r.t_inference_ms + r.t_norm_ms;
            EXPECT_LE(parts, r.time_ms * 1.05 + 0.05);
            EXPECT_GE(parts, r.time_ms * 0.5);
        }
    }
    for (const auto& f : rep.feature_cost) EXPECT_LE(f.visits, 4u * static_cast<std::uint64_t>(f.nnz + f.n));

    // CSV tables are re-derivable from the records
    std::vector<MethodRecord> mrs;
    for (const auto& r : rep.records) mrs.push_back({r.method, r.norm, r.ok, r.lre, r.time_ms, r.median_ms, r.t_inference_ms});
    const auto again = aggregate(mrs);
    ASSERT_EQ(again.size(), rep.rows.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
        EXPECT_EQ(again[i].lre_mean, rep.rows[i].lre_mean);
        EXPECT_EQ(again[i].acc_05, rep.rows[i].acc_05);
    }
    const auto j = report_to_json(rep);
    EXPECT_EQ(j["format_version"], kReportFormatVersion);
    EXPECT_EQ(j["records"].size(), rep.records.size());
}

TEST(Pipeline, DeterministicWithoutTiming) {
    const auto a = fresh_dir("det_a");
    const auto b = fresh_dir("det_b");
    for (const auto& dir : {a, b}) {
        const Config c = tiny_config(dir);
        const Dataset ds = run_generate(c);
        run_train(c, ds);
        run_benchmark(c);
    }
    for (const char* f : {"tables.csv", "per_matrix.csv", "report.json"}) {
        std::string sa = slurp(a / f), sb = slurp(b / f);
        // output directories differ only in the path embedded in the config snapshot
        for (auto* s : {&sa, &sb}) {
            for (const auto& d : {a.string(), b.string()}) {
                for (auto pos = s->find(d); pos != std::string::npos; pos = s->find(d)) s->replace(pos, d.size(), "DIR");
            }
        }
        EXPECT_EQ(sa, sb) << f;
    }
    EXPECT_EQ(slurp(a / "dataset" / "manifest.json").size(), slurp(b / "dataset" / "manifest.json").size());
    for (const auto& r : all_runs()) {
        const auto name = scheme_name(r.scheme) + "_norm" + std::to_string(r.norm);
        EXPECT_EQ(slurp(a / "models" / (name + ".json")), slurp(b / "models" / (name + ".json")));
    }
    EXPECT_TRUE(fs::exists(a / "loss_history.csv"));
    EXPECT_TRUE(fs::exists(a / "feature_cost.csv"));
    const auto h = read_history_csv(a / "models" / "inverse_norm_norm1.history.csv");
    EXPECT_EQ(h.epochs(), 3u);
}

TEST(Pipeline, MissingInputsAreConfigErrors) {
    const auto dir = fresh_dir("missing");
    Config c = tiny_config(dir);
    EXPECT_THROW(run_benchmark(c), ConfigError);
    c.counts = {2, 1, 1};
    run_generate(c);
    EXPECT_THROW(run_benchmark(c), ConfigError);
}

TEST(Cli, ExitCodes) {
    const auto dir = fresh_dir("cli");
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("--no-such-flag"), 2);
    EXPECT_EQ(run_cli("generate --config " + (dir / "absent.json").string()), 2);

    std::ofstream(dir / "bad.json") << R"({"unknown": 1})";
    EXPECT_EQ(run_cli("generate --config " + (dir / "bad.json").string()), 2);

    mm::write_file((dir / "poisson.mtx").string(), gen_poisson_2d(4));
    EXPECT_EQ(run_cli("estimate --matrix " + (dir / "poisson.mtx").string() + " --method hager_higham"), 0);
    EXPECT_EQ(run_cli("estimate --matrix " + (dir / "poisson.mtx").string() + " --method exact --norm 2"), 0);
    EXPECT_EQ(run_cli("estimate --matrix " + (dir / "poisson.mtx").string() + " --method gnn"), 2);

    const auto singular = csr_from_triplets(3, std::vector<Triplet>{{0, 0, 1}, {1, 1, 1}, {0, 2, 1}});
    mm::write_file((dir / "singular.mtx").string(), singular);
    EXPECT_EQ(run_cli("estimate --matrix " + (dir / "singular.mtx").string() + " --method exact"), 3);
    EXPECT_EQ(run_cli("estimate --matrix " + (dir / "singular.mtx").string() + " --method hager_higham"), 3);
}

TEST(Cli, EndToEndSmallRun) {
    const auto dir = fresh_dir("cli_e2e");
    const Config c = tiny_config(dir);
    std::ofstream(dir / "cfg.json") << config_to_json(c).dump();
    const std::string cfg = " --quiet --config " + (dir / "cfg.json").string();
    ASSERT_EQ(run_cli("generate" + cfg), 0);
    ASSERT_EQ(run_cli("train --scheme kappa --norm 1" + cfg), 0);
    EXPECT_EQ(run_cli("bench --no-timing --scheme kappa --norm 1" + cfg), 0);
    EXPECT_EQ(run_cli("bench --no-timing" + cfg), 2);  // other models were not trained
    EXPECT_EQ(run_cli("features --out " + (dir / "f.csv").string() + cfg), 0);
    EXPECT_TRUE(fs::exists(dir / "tables.csv"));
    std::ifstream f(dir / "f.csv");
    std::string line;
    int lines = 0;
    while (std::getline(f, line)) ++lines;
    EXPECT_EQ(lines, 1 + 8 + 3 + 3);
    EXPECT_EQ(run_cli("estimate --matrix " + (dir / "dataset" / "test" / "x.mtx").string() + " --method exact"), 2);
}
