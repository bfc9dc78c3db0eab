#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "condest/error.hpp"
#include "condest/gen/dataset.hpp"
#include "condest/model/gnn.hpp"
#include "condest/nn/optim.hpp"

namespace condest::bench {

/// One trained model: which target scheme, which norm.
struct RunSpec {
    Scheme scheme = Scheme::PredictInverseNorm;
    int norm = 1;
};

inline std::vector<RunSpec> all_runs() {
    return {{Scheme::PredictInverseNorm, 1}, {Scheme::PredictKappa, 1}, {Scheme::PredictInverseNorm, 2},
            {Scheme::PredictKappa, 2}};
}

struct Config {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "condest_out";
    std::filesystem::path dataset_dir;  // empty: <output_dir>/dataset
    std::filesystem::path model_dir;    // empty: <output_dir>/models

    SplitCounts counts{240, 40, 40};
    std::array<Index, 2> n_range{100, 400};
    std::vector<GenSpec> specs;  // empty: all six classes over n_range
    Index max_n = kDefaultExactCap;

    ModelConfig model;
    nn::TrainConfig train;
    bool train_seed_set = false;
    std::vector<RunSpec> runs = all_runs();

    int repeats = 4;
    bool timing = true;
    std::vector<int> gk_iterations{20, 60};

    std::filesystem::path dataset_path() const { return dataset_dir.empty() ? output_dir / "dataset" : dataset_dir; }
    std::filesystem::path model_path_dir() const { return model_dir.empty() ? output_dir / "models" : model_dir; }
    std::filesystem::path model_path(const RunSpec& r) const {
        return model_path_dir() / (scheme_name(r.scheme) + "_norm" + std::to_string(r.norm) + ".json");
    }
    std::vector<GenSpec> effective_specs() const { return specs.empty() ? default_specs(n_range) : specs; }

    /// Applies a global seed override: the dataset and training seeds follow.
    void set_seed(std::uint64_t s) {
        seed = s;
        train.seed = s;
        train_seed_set = true;
    }

    void validate() const {
        if (counts.train < 1 || counts.val < 1 || counts.test < 1) {
            throw ConfigError("config: every split needs at least one matrix");
        }
        if (repeats < 1) throw ConfigError("config: repeats must be >= 1");
        for (int k : gk_iterations) {
            if (k < 2) throw ConfigError("config: Golub-Kahan iteration counts must be >= 2");
        }
        if (runs.empty()) throw ConfigError("config: no (scheme, norm) runs configured");
        for (const auto& r : runs) {
            if (r.norm != 1 && r.norm != 2) throw ConfigError("config: run norm must be 1 or 2");
        }
        for (const auto& s : effective_specs()) s.validate();
        model.validate();
        train.validate();
    }
};

/// Model file companion holding the per-epoch training history.
inline std::filesystem::path history_path(const std::filesystem::path& model_path) {
    auto p = model_path;
    p.replace_extension(".history.csv");
    return p;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError("config: '" + where + "' must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (allowed.count(key) == 0) {
            throw ConfigError("config: unknown key '" + key + "' in " + where);
        }
    }
}

}  // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
    Config c;
    try {
        detail::check_keys(j, {"seed", "output_dir", "dataset", "model", "train", "runs", "bench"}, "config");
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            detail::check_keys(d, {"dir", "counts", "n_range", "specs", "max_n"}, "dataset");
            if (d.contains("dir")) c.dataset_dir = d["dir"].get<std::string>();
            if (d.contains("counts")) {
                const auto& k = d["counts"];
                detail::check_keys(k, {"train", "val", "test"}, "dataset.counts");
                c.counts.train = k.value("train", c.counts.train);
                c.counts.val = k.value("val", c.counts.val);
                c.counts.test = k.value("test", c.counts.test);
            }
            if (d.contains("n_range")) c.n_range = {d["n_range"][0].get<Index>(), d["n_range"][1].get<Index>()};
            if (d.contains("specs")) {
                for (const auto& s : d["specs"]) {
                    auto spec_json = s;
                    if (!spec_json.contains("n_range")) spec_json["n_range"] = {c.n_range[0], c.n_range[1]};
                    c.specs.push_back(spec_from_json(spec_json));
                }
            }
            if (d.contains("max_n")) c.max_n = d["max_n"].get<Index>();
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            detail::check_keys(m, {"dir", "hidden_dim", "gcn_layers", "head_widths"}, "model");
            if (m.contains("dir")) c.model_dir = m["dir"].get<std::string>();
            c.model.hidden_dim = m.value("hidden_dim", c.model.hidden_dim);
            c.model.gcn_layers = m.value("gcn_layers", c.model.gcn_layers);
            if (m.contains("head_widths")) c.model.head_widths = m["head_widths"].get<std::vector<std::size_t>>();
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            detail::check_keys(t,
                               {"lr", "beta1", "beta2", "adam_eps", "epochs", "batch_size", "early_stop_patience",
                                "plateau_factor", "plateau_patience", "clip_threshold", "dropout", "l2_lambda", "seed"},
                               "train");
            auto& tc = c.train;
            tc.lr = t.value("lr", tc.lr);
            tc.beta1 = t.value("beta1", tc.beta1);
            tc.beta2 = t.value("beta2", tc.beta2);
            tc.adam_eps = t.value("adam_eps", tc.adam_eps);
            tc.epochs = t.value("epochs", tc.epochs);
            tc.batch_size = t.value("batch_size", tc.batch_size);
            tc.early_stop_patience = t.value("early_stop_patience", tc.early_stop_patience);
            tc.plateau_factor = t.value("plateau_factor", tc.plateau_factor);
            tc.plateau_patience = t.value("plateau_patience", tc.plateau_patience);
            tc.clip_threshold = t.value("clip_threshold", tc.clip_threshold);
            tc.dropout_rate = t.value("dropout", tc.dropout_rate);
            tc.l2_lambda = t.value("l2_lambda", tc.l2_lambda);
            if (t.contains("seed")) {
                tc.seed = t["seed"].get<std::uint64_t>();
                c.train_seed_set = true;
            }
        }
        if (!c.train_seed_set) c.train.seed = c.seed;
        if (j.contains("runs")) {
            c.runs.clear();
            for (const auto& r : j["runs"]) {
                detail::check_keys(r, {"scheme", "norm"}, "runs[]");
                c.runs.push_back({scheme_from_name(r.at("scheme").get<std::string>()), r.at("norm").get<int>()});
            }
        }
        if (j.contains("bench")) {
            const auto& b = j["bench"];
            detail::check_keys(b, {"repeats", "timing", "gk_iterations"}, "bench");
            c.repeats = b.value("repeats", c.repeats);
            c.timing = b.value("timing", c.timing);
            if (b.contains("gk_iterations")) c.gk_iterations = b["gk_iterations"].get<std::vector<int>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

/// Snapshot of the effective configuration (embedded in reports).
inline nlohmann::json config_to_json(const Config& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir.string();
    j["dataset"] = {{"dir", c.dataset_path().string()},
                    {"counts", {{"train", c.counts.train}, {"val", c.counts.val}, {"test", c.counts.test}}},
                    {"n_range", {c.n_range[0], c.n_range[1]}},
                    {"max_n", c.max_n}};
    j["dataset"]["specs"] = nlohmann::json::array();
    for (const auto& s : c.effective_specs()) j["dataset"]["specs"].push_back(spec_to_json(s));
    j["model"] = {{"dir", c.model_path_dir().string()},
                  {"hidden_dim", c.model.hidden_dim},
                  {"gcn_layers", c.model.gcn_layers},
                  {"head_widths", c.model.head_widths}};
    const auto& t = c.train;
    j["train"] = {{"lr", t.lr},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"adam_eps", t.adam_eps},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"early_stop_patience", t.early_stop_patience},
                  {"plateau_factor", t.plateau_factor},
                  {"plateau_patience", t.plateau_patience},
                  {"clip_threshold", t.clip_threshold},
                  {"dropout", t.dropout_rate},
                  {"l2_lambda", t.l2_lambda},
                  {"seed", t.seed}};
    j["runs"] = nlohmann::json::array();
    for (const auto& r : c.runs) j["runs"].push_back({{"scheme", scheme_name(r.scheme)}, {"norm", r.norm}});
    j["bench"] = {{"repeats", c.repeats}, {"timing", c.timing}, {"gk_iterations", c.gk_iterations}};
    return j;
}

}  // namespace condest::bench
