// condest: generate / train / estimate / bench / features

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "condest/condest.hpp"

namespace {

using namespace condest;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output_dir;
    bool quiet = false;
};

bench::Config resolve(const Common& c) {
    bench::Config cfg =
        c.config.empty() ? bench::config_from_json(nlohmann::json::object()) : bench::load_config(c.config);
    if (c.seed) cfg.set_seed(*c.seed);
    if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
    return cfg;
}

bench::Logger logger(const Common& c) {
    if (c.quiet) return {};
    return [](const std::string& s) { std::cerr << s << '\n'; };
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config, "JSON configuration file");
    sub->add_option("-s,--seed", c.seed, "Override the global seed");
    sub->add_option("-o,--output-dir", c.output_dir, "Override the output directory");
    sub->add_flag("-q,--quiet", c.quiet, "Suppress progress output");
}

/// Keeps only the runs matching --scheme / --norm when given.
void filter_runs(bench::Config& cfg, const std::string& scheme, int norm) {
    if (scheme.empty() && norm == 0) return;
    std::vector<bench::RunSpec> kept;
    for (const auto& r : cfg.runs) {
        if (!scheme.empty() && r.scheme != scheme_from_name(scheme)) continue;
        if (norm != 0 && r.norm != norm) continue;
        kept.push_back(r);
    }
    if (kept.empty()) {
        // Not in the config list: take the flags literally.
        if (scheme.empty() || norm == 0) throw ConfigError("no configured run matches the --scheme/--norm filter");
        kept.push_back({scheme_from_name(scheme), norm});
    }
    cfg.runs = kept;
}

void print_rows(const std::vector<bench::MetricRow>& rows) {
    std::printf("%-5s %-22s %12s %12s %10s %10s %8s %8s\n", "norm", "method", "mean_ms", "infer_ms", "LRE_mean",
                "LRE_max", "acc@0.5", "acc@1.0");
    for (const auto& r : rows) {
        std::printf("%-5d %-22s %12.4g %12.4g %10.3f %10.3f %8.1f %8.1f\n", r.norm, r.method.c_str(), r.mean_time_ms,
                    r.inference_ms, r.lre_mean, r.lre_max, r.acc_05, r.acc_10);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse matrix condition number estimation: learned surrogate, classical estimators, benchmarks"};
    app.require_subcommand(1);

    Common gen_opts;
    auto* gen = app.add_subcommand("generate", "Generate and label a train/val/test matrix corpus");
    add_common(gen, gen_opts);

    Common train_opts;
    std::string train_scheme;
    int train_norm = 0;
    auto* tr = app.add_subcommand("train", "Train one model per configured (scheme, norm) run");
    add_common(tr, train_opts);
    tr->add_option("--scheme", train_scheme, "Restrict to one scheme (inverse_norm or kappa)");
    tr->add_option("--norm", train_norm, "Restrict to one norm (1 or 2)")->check(CLI::IsMember({1, 2}));

    Common est_opts;
    std::string est_matrix, est_method = "gnn", est_model;
    int est_norm = 1, est_k = 60;
    auto* est = app.add_subcommand("estimate", "Estimate the condition number of one Matrix Market file");
    add_common(est, est_opts);
    est->add_option("-m,--matrix", est_matrix, "Matrix Market file")->required();
    est->add_option("--method", est_method, "gnn, hager_higham, golub_kahan or exact")
        ->check(CLI::IsMember({"gnn", "hager_higham", "golub_kahan", "exact"}));
    est->add_option("--model", est_model, "Model file (gnn method)");
    est->add_option("--norm", est_norm, "Norm for the exact oracle (1 or 2)")->check(CLI::IsMember({1, 2}));
    est->add_option("-k,--iterations", est_k, "Golub-Kahan steps");

    Common bench_opts;
    std::string bench_scheme;
    int bench_norm = 0;
    bool no_timing = false;
    std::optional<int> repeats;
    auto* be = app.add_subcommand("bench", "Evaluate all methods on the test split and write the report");
    add_common(be, bench_opts);
    be->add_option("--scheme", bench_scheme, "Restrict to one scheme");
    be->add_option("--norm", bench_norm, "Restrict to one norm")->check(CLI::IsMember({1, 2}));
    be->add_flag("--no-timing", no_timing, "Run each method once and omit timings (reproducible output)");
    be->add_option("-R,--repeats", repeats, "Timed runs per method and matrix");

    Common feat_opts;
    std::string feat_matrix, feat_out;
    auto* fe = app.add_subcommand("features", "Dump the global feature vectors as CSV");
    add_common(fe, feat_opts);
    fe->add_option("-m,--matrix", feat_matrix, "Single Matrix Market file (default: every matrix of the dataset)");
    fe->add_option("--out", feat_out, "Output CSV (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) {
            const auto cfg = resolve(gen_opts);
            const auto ds = bench::run_generate(cfg, logger(gen_opts));
            std::printf("generated %zu/%zu/%zu matrices in %s\n", ds.train.size(), ds.val.size(), ds.test.size(),
                        cfg.dataset_path().string().c_str());
        } else if (*tr) {
            auto cfg = resolve(train_opts);
            filter_runs(cfg, train_scheme, train_norm);
            const Dataset ds = load_dataset(cfg.dataset_path());
            const auto runs = bench::run_train(cfg, ds, logger(train_opts));
            for (const auto& r : runs) {
                std::printf("%s norm%d: best epoch %d, val loss %.6g -> %s\n", scheme_name(r.run.scheme).c_str(),
                            r.run.norm, r.history.best_epoch, r.history.best_val_loss,
                            cfg.model_path(r.run).string().c_str());
            }
        } else if (*est) {
            const auto cfg = resolve(est_opts);
            const CsrMatrix a = mm::read_file(est_matrix);
            nlohmann::json out;
            out["matrix"] = est_matrix;
            out["n"] = a.n();
            out["nnz"] = a.nnz();
            out["method"] = est_method;
            if (est_method == "gnn") {
                if (est_model.empty()) throw ConfigError("estimate: --model is required for the gnn method");
                ModelParams mp = load_model(est_model);
                const Prediction p = predict_cond(a, mp);
                out["scheme"] = scheme_name(mp.config.scheme);
                out["norm"] = mp.config.norm;
                out["kappa_hat"] = p.kappa_hat;
                out["t_feature_ms"] = 1e3 * p.t_feature;
                out["t_inference_ms"] = 1e3 * p.t_inference;
                out["t_norm_ms"] = 1e3 * p.t_norm;
            } else if (est_method == "hager_higham") {
                const auto r = cond1_hager_higham(a);
                out["norm"] = 1;
                out["kappa_hat"] = r.kappa_hat;
                out["iterations"] = r.iterations;
                out["t_factor_ms"] = 1e3 * r.t_factor;
                out["t_iter_ms"] = 1e3 * r.t_iter;
            } else if (est_method == "golub_kahan") {
                const int k = static_cast<int>(std::min<Index>(est_k, a.n()));
                const auto r = golub_kahan_cond2(a, k, cfg.seed);
                if (!r.converged) throw NumericalError("estimate: Golub-Kahan did not converge");
                out["norm"] = 2;
                out["kappa_hat"] = r.kappa_hat;
                out["iterations"] = r.iterations;
                out["t_iter_ms"] = 1e3 * r.t_iter;
            } else {
                out["norm"] = est_norm;
                out["kappa_hat"] = exact_cond(a, est_norm, cfg.max_n);
            }
            std::cout << out.dump(2) << '\n';
        } else if (*be) {
            auto cfg = resolve(bench_opts);
            filter_runs(cfg, bench_scheme, bench_norm);
            if (no_timing) cfg.timing = false;
            if (repeats) {
                if (*repeats < 1) throw ConfigError("bench: --repeats must be >= 1");
                cfg.repeats = *repeats;
            }
            const auto rep = bench::run_benchmark(cfg, logger(bench_opts));
            print_rows(rep.rows);
            std::printf("report written to %s\n", cfg.output_dir.string().c_str());
        } else if (*fe) {
            const auto cfg = resolve(feat_opts);
            std::ofstream file;
            if (!feat_out.empty()) {
                file.open(feat_out);
                if (!file) throw ConfigError("features: cannot write " + feat_out);
            }
            std::ostream& out = feat_out.empty() ? std::cout : file;
            write_features_csv_header(out);
            if (!feat_matrix.empty()) {
                write_features_csv_row(out, std::filesystem::path(feat_matrix).stem().string(),
                                       extract_global_features(mm::read_file(feat_matrix)));
            } else {
                const Dataset ds = load_dataset(cfg.dataset_path());
                for (auto s : {Split::Train, Split::Val, Split::Test}) {
                    for (const auto& lm : ds.split(s)) write_features_csv_row(out, lm.id, extract_global_features(lm.matrix));
                }
            }
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const SingularMatrix& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitOk;
}
