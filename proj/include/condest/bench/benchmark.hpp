#pragma once

#include <charconv>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "condest/bench/config.hpp"
#include "condest/bench/metrics.hpp"
#include "condest/error.hpp"
#include "condest/estimators/estimators.hpp"
#include "condest/features/features.hpp"
#include "condest/gen/dataset.hpp"
#include "condest/model/gnn.hpp"
#include "condest/model/io.hpp"
#include "condest/model/train.hpp"

namespace condest::bench {

using Logger = std::function<void(const std::string&)>;

inline constexpr int kReportFormatVersion = 1;

// ---------------------------------------------------------------------------
// Pipeline steps

inline Dataset run_generate(const Config& cfg, const Logger& log = {}) {
    const auto specs = cfg.effective_specs();
    Dataset ds = sample_dataset(specs, cfg.counts, cfg.seed, cfg.max_n, [&](const std::string& msg) {
        if (log) log("resample " + msg);
    });
    save_dataset(ds, cfg.dataset_path());
    if (log) {
        log("wrote " + std::to_string(ds.train.size() + ds.val.size() + ds.test.size()) + " matrices to " +
            cfg.dataset_path().string() + " (" + std::to_string(ds.total_resamples) + " resamples)");
    }
    return ds;
}

struct TrainedRun {
    RunSpec run;
    ModelParams params;
    TrainHistory history;
};

inline void write_history_file(const TrainHistory& h, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    write_history_csv(out, h);
}

inline std::vector<TrainedRun> run_train(const Config& cfg, const Dataset& ds, const Logger& log = {}) {
    std::filesystem::create_directories(cfg.model_path_dir());
    std::vector<TrainedRun> out;
    for (const auto& run : cfg.runs) {
        ModelConfig mc = cfg.model;
        mc.scheme = run.scheme;
        mc.norm = run.norm;
        TrainHooks hooks;
        const std::string tag = scheme_name(run.scheme) + "/norm" + std::to_string(run.norm);
        if (log) {
            hooks.on_epoch = [&](int epoch, double tl, double vl, double lr) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%s epoch %3d  train %.6f  val %.6f  lr %.3g", tag.c_str(), epoch, tl,
                              vl, lr);
                log(buf);
            };
        }
        auto res = train(ds, mc, cfg.train, hooks);
        const auto path = cfg.model_path(run);
        save_model(res.params, path.string());
        write_history_file(res.history, history_path(path));
        if (log) {
            log(tag + ": best epoch " + std::to_string(res.history.best_epoch) + ", " +
                std::to_string(res.params.store.count()) + " parameters, saved " + path.string());
        }
        out.push_back({run, std::move(res.params), std::move(res.history)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark

/// One (matrix, norm, method) evaluation.
struct MatrixResult {
    std::string id;
    std::string cls;
    Index n = 0;
    Index nnz = 0;
    int norm = 1;
    std::string method;
    bool ok = true;
    std::string error;
    double kappa_true = 0.0;
    double kappa_hat = 0.0;
    double lre = 0.0;
    double time_ms = std::numeric_limits<double>::quiet_NaN();
    double median_ms = std::numeric_limits<double>::quiet_NaN();
    double t_feature_ms = std::numeric_limits<double>::quiet_NaN();
    double t_inference_ms = std::numeric_limits<double>::quiet_NaN();
    double t_norm_ms = std::numeric_limits<double>::quiet_NaN();
};

struct Speedup {
    int norm = 1;
    std::string method;
    std::string baseline;
    double factor = std::numeric_limits<double>::quiet_NaN();
};

struct FeatureCost {
    std::string id;
    Index n = 0;
    Index nnz = 0;
    std::uint64_t visits = 0;
    double time_ms = std::numeric_limits<double>::quiet_NaN();
};

struct EvalReport {
    std::vector<MatrixResult> records;
    std::vector<MetricRow> rows;
    std::vector<Speedup> speedups;
    std::vector<FeatureCost> feature_cost;
    nlohmann::json config;
};

inline std::string gnn_method_name(Scheme s) { return "gnn_" + scheme_name(s); }

namespace detail {

inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    return std::string(buf, std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general).ptr);
}

inline nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace detail

/// Evaluates the exact oracle, each learned model, Hager-Higham (1-norm) and
/// Golub-Kahan (2-norm) on `test`. With timing disabled each method runs once
/// and all times are NaN, which makes the report reproducible bit for bit.
inline EvalReport evaluate(const Config& cfg, const std::vector<LabeledMatrix>& test, std::vector<TrainedRun>& models,
                           const Logger& log = {}) {
    if (test.empty()) {
        throw ConfigError("bench: test split is empty");
    }
    if (models.empty()) {
        throw ConfigError("bench: no trained models");
    }
    EvalReport rep;
    rep.config = config_to_json(cfg);
    std::vector<int> norms;
    for (const auto& m : models) {
        if (std::find(norms.begin(), norms.end(), m.run.norm) == norms.end()) norms.push_back(m.run.norm);
    }
    std::sort(norms.begin(), norms.end());

    struct Outcome {
        double kappa_hat = 0.0;
        double t_feature = 0.0, t_inference = 0.0, t_norm = 0.0;
    };
    for (const auto& lm : test) {
        const CsrMatrix& a = lm.matrix;
        for (int p : norms) {
            auto record = [&](const std::string& method, const std::function<Outcome()>& fn) {
                MatrixResult r;
                r.id = lm.id;
                r.cls = class_name(lm.cls);
                r.n = a.n();
                r.nnz = a.nnz();
                r.norm = p;
                r.method = method;
                r.kappa_true = lm.kappa(p);
                try {
                    Outcome o;
                    if (cfg.timing) {
                        Outcome sum;
                        int calls = 0;
                        const auto stats = time_method(
                            [&] {
                                o = fn();
                                // The first call is the untimed warm-up.
                                if (calls++ == 0) return;
                                sum.t_feature += o.t_feature;
                                sum.t_inference += o.t_inference;
                                sum.t_norm += o.t_norm;
                            },
                            cfg.repeats);
                        r.time_ms = stats.mean_ms;
                        r.median_ms = stats.median_ms;
                        if (method.rfind("gnn_", 0) == 0) {
                            const double timed = static_cast<double>(cfg.repeats);
                            r.t_feature_ms = 1e3 * sum.t_feature / timed;
                            r.t_inference_ms = 1e3 * sum.t_inference / timed;
                            r.t_norm_ms = 1e3 * sum.t_norm / timed;
                        }
                    } else {
                        o = fn();
                    }
                    r.kappa_hat = o.kappa_hat;
                    r.lre = compute_lre(o.kappa_hat, r.kappa_true);
                } catch (const Error& e) {
                    r.ok = false;
                    r.error = e.what();
                    if (log) log("bench: " + method + " failed on " + lm.id + ": " + e.what());
                }
                rep.records.push_back(std::move(r));
            };

            record("exact", [&] { return Outcome{exact_cond(a, p, cfg.max_n)}; });
            for (auto& m : models) {
                if (m.run.norm != p) continue;
                record(gnn_method_name(m.run.scheme), [&] {
                    const Prediction pr = predict_cond(a, m.params);
                    return Outcome{pr.kappa_hat, pr.t_feature, pr.t_inference, pr.t_norm};
                });
            }
            if (p == 1) {
                record("hager_higham", [&] { return Outcome{cond1_hager_higham(a).kappa_hat}; });
            } else {
                for (int k : cfg.gk_iterations) {
                    record("golub_kahan_k" + std::to_string(k), [&] {
                        const int kk = static_cast<int>(std::min<Index>(k, a.n()));
                        const auto r = golub_kahan_cond2(a, kk, cfg.seed);
                        if (!r.converged) throw NumericalError("Golub-Kahan did not converge");
                        return Outcome{r.kappa_hat};
                    });
                }
            }
        }
        FeatureCost fc;
        fc.id = lm.id;
        fc.n = a.n();
        fc.nnz = a.nnz();
        (void)extract_global_features(a, &fc.visits);
        if (cfg.timing) {
            fc.time_ms = time_method([&] { (void)extract_global_features(a); }, cfg.repeats).mean_ms;
        }
        rep.feature_cost.push_back(fc);
        if (log) log("bench: evaluated " + lm.id);
    }

    std::vector<MethodRecord> mrs;
    for (const auto& r : rep.records) {
        mrs.push_back({r.method, r.norm, r.ok, r.lre, r.time_ms, r.median_ms, r.t_inference_ms});
    }
    rep.rows = aggregate(mrs);
    for (const auto& row : rep.rows) {
        if (row.method == "exact") continue;
        for (const auto& base : rep.rows) {
            if (base.method == "exact" && base.norm == row.norm) {
                rep.speedups.push_back({row.norm, row.method, "exact", base.mean_time_ms / row.mean_time_ms});
            }
        }
    }
    return rep;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
    using detail::num;
    nlohmann::json j;
    j["format_version"] = kReportFormatVersion;
    j["config"] = rep.config;
    j["environment"] = {
        {"compiler", __VERSION__},
        {"cxx_standard", static_cast<long>(__cplusplus)},
        {"feature_schema_version", kFeatureSchemaVersion},
    };
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rep.rows) {
        j["rows"].push_back({{"norm", r.norm},
                             {"method", r.method},
                             {"count", r.count},
                             {"failures", r.failures},
                             {"mean_time_ms", num(r.mean_time_ms)},
                             {"median_time_ms", num(r.median_time_ms)},
                             {"inference_ms", num(r.inference_ms)},
                             {"lre_mean", r.lre_mean},
                             {"lre_max", r.lre_max},
                             {"acc_0_5", r.acc_05},
                             {"acc_1_0", r.acc_10}});
    }
    j["speedups"] = nlohmann::json::array();
    for (const auto& s : rep.speedups) {
        j["speedups"].push_back({{"norm", s.norm}, {"method", s.method}, {"baseline", s.baseline}, {"factor", num(s.factor)}});
    }
    j["records"] = nlohmann::json::array();
    for (const auto& r : rep.records) {
        nlohmann::json e = {{"id", r.id},
                            {"class", r.cls},
                            {"n", r.n},
                            {"nnz", r.nnz},
                            {"norm", r.norm},
                            {"method", r.method},
                            {"ok", r.ok},
                            {"kappa_true", r.kappa_true},
                            {"kappa_hat", num(r.kappa_hat)},
                            {"lre", num(r.lre)},
                            {"time_ms", num(r.time_ms)},
                            {"median_ms", num(r.median_ms)},
                            {"t_feature_ms", num(r.t_feature_ms)},
                            {"t_inference_ms", num(r.t_inference_ms)},
                            {"t_norm_ms", num(r.t_norm_ms)}};
        if (!r.ok) e["error"] = r.error;
        j["records"].push_back(std::move(e));
    }
    j["feature_cost"] = nlohmann::json::array();
    for (const auto& f : rep.feature_cost) {
        j["feature_cost"].push_back(
            {{"id", f.id}, {"n", f.n}, {"nnz", f.nnz}, {"visits", f.visits}, {"time_ms", num(f.time_ms)}});
    }
    return j;
}

inline void write_tables_csv(std::ostream& out, const EvalReport& rep) {
    using detail::fmt;
    out << "norm,method,count,failures,mean_time_ms,median_time_ms,inference_ms,lre_mean,lre_max,acc_0_5,acc_1_0,"
           "speedup_vs_exact\n";
    for (const auto& r : rep.rows) {
        double sp = std::numeric_limits<double>::quiet_NaN();
        for (const auto& s : rep.speedups) {
            if (s.norm == r.norm && s.method == r.method) sp = s.factor;
        }
        if (r.method == "exact") sp = std::isnan(r.mean_time_ms) ? sp : 1.0;
        out << r.norm << ',' << r.method << ',' << r.count << ',' << r.failures << ',' << fmt(r.mean_time_ms) << ','
            << fmt(r.median_time_ms) << ',' << fmt(r.inference_ms) << ',' << fmt(r.lre_mean) << ',' << fmt(r.lre_max)
            << ',' << fmt(r.acc_05) << ',' << fmt(r.acc_10) << ',' << fmt(sp) << '\n';
    }
}

inline void write_per_matrix_csv(std::ostream& out, const EvalReport& rep) {
    using detail::fmt;
    out << "id,class,n,nnz,norm,method,ok,kappa_true,kappa_hat,lre,time_ms,median_ms,t_feature_ms,t_inference_ms,"
           "t_norm_ms\n";
    for (const auto& r : rep.records) {
        out << r.id << ',' << r.cls << ',' << r.n << ',' << r.nnz << ',' << r.norm << ',' << r.method << ','
            << (r.ok ? 1 : 0) << ',' << fmt(r.kappa_true) << ',' << fmt(r.ok ? r.kappa_hat : std::nan("")) << ','
            << fmt(r.ok ? r.lre : std::nan("")) << ',' << fmt(r.time_ms) << ',' << fmt(r.median_ms) << ','
            << fmt(r.t_feature_ms) << ',' << fmt(r.t_inference_ms) << ',' << fmt(r.t_norm_ms) << '\n';
    }
}

inline void write_feature_cost_csv(std::ostream& out, const EvalReport& rep) {
    out << "id,n,nnz,visits,time_ms\n";
    for (const auto& f : rep.feature_cost) {
        out << f.id << ',' << f.n << ',' << f.nnz << ',' << f.visits << ',' << detail::fmt(f.time_ms) << '\n';
    }
}

/// Writes report.json, tables.csv, per_matrix.csv, feature_cost.csv and
/// loss_history.csv (all model histories, tagged by scheme and norm).
inline void write_report(const EvalReport& rep, const std::vector<TrainedRun>& models,
                         const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name);
        if (!f) throw ConfigError("bench: cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("report.json");
        f << report_to_json(rep).dump(2) << '\n';
    }
    {
        auto f = open("tables.csv");
        write_tables_csv(f, rep);
    }
    {
        auto f = open("per_matrix.csv");
        write_per_matrix_csv(f, rep);
    }
    {
        auto f = open("feature_cost.csv");
        write_feature_cost_csv(f, rep);
    }
    {
        auto f = open("loss_history.csv");
        f << "scheme,norm,epoch,train_loss,val_loss,lr,wall_time\n";
        for (const auto& m : models) {
            std::ostringstream body;
            write_history_csv(body, m.history);
            std::istringstream lines(body.str());
            std::string line;
            std::getline(lines, line);  // header
            while (std::getline(lines, line)) {
                f << scheme_name(m.run.scheme) << ',' << m.run.norm << ',' << line << '\n';
            }
        }
    }
}

/// Parses a history CSV written by write_history_csv.
inline TrainHistory read_history_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    TrainHistory h;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() < 5) throw ConfigError("malformed history row in " + path.string());
        h.train_loss.push_back(v[1]);
        h.val_loss.push_back(v[2]);
        h.lr.push_back(v[3]);
        h.wall_time.push_back(v[4]);
        if (v[2] < h.best_val_loss) {
            h.best_val_loss = v[2];
            h.best_epoch = static_cast<int>(v[0]);
        }
    }
    return h;
}

/// Loads the dataset and every configured model from disk, evaluates, and
/// writes the report files to the output directory.
inline EvalReport run_benchmark(const Config& cfg, const Logger& log = {}) {
    namespace fs = std::filesystem;
    if (!fs::exists(cfg.dataset_path() / "manifest.json")) {
        throw ConfigError("bench: no dataset at " + cfg.dataset_path().string());
    }
    std::vector<TrainedRun> models;
    for (const auto& run : cfg.runs) {
        if (!fs::exists(cfg.model_path(run))) {
            throw ConfigError("bench: missing model " + cfg.model_path(run).string());
        }
    }
    for (const auto& run : cfg.runs) {
        TrainedRun tr;
        tr.run = run;
        tr.params = load_model(cfg.model_path(run).string());
        if (tr.params.config.scheme != run.scheme || tr.params.config.norm != run.norm) {
            throw ConfigError("bench: model " + cfg.model_path(run).string() + " does not match its run");
        }
        const auto hp = history_path(cfg.model_path(run));
        if (fs::exists(hp)) tr.history = read_history_csv(hp);
        models.push_back(std::move(tr));
    }
    const Dataset ds = load_dataset(cfg.dataset_path());
    EvalReport rep = evaluate(cfg, ds.test, models, log);
    write_report(rep, models, cfg.output_dir);
    return rep;
}

}  // namespace condest::bench
