#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "condest/error.hpp"
#include "condest/model/gnn.hpp"

namespace condest {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const ModelParams& mp) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["feature_schema_version"] = mp.config.feature_schema_version;
    j["config"] = {
        {"hidden_dim", mp.config.hidden_dim},
        {"gcn_layers", mp.config.gcn_layers},
        {"head_widths", mp.config.head_widths},
        {"scheme", scheme_name(mp.config.scheme)},
        {"norm", mp.config.norm},
    };
    j["scaling"] = {
        {"node_mean", mp.scaling.node_mean},
        {"node_scale", mp.scaling.node_scale},
        {"global_mean", mp.scaling.global_mean},
        {"global_scale", mp.scaling.global_scale},
    };
    auto params = nlohmann::json::array();
    for (const auto& p : mp.store.all()) {
        params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"weight", p.is_weight}, {"values", p.value.data()}});
    }
    j["parameters"] = std::move(params);
    return j;
}

inline ModelParams model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != kModelFormatVersion) {
            throw ConfigError("model: unsupported format version " + j.at("format_version").dump());
        }
        const int schema = j.at("feature_schema_version").get<int>();
        if (schema != kFeatureSchemaVersion) {
            throw ConfigError("model: feature schema version " + std::to_string(schema) + " does not match extractor version " +
                              std::to_string(kFeatureSchemaVersion));
        }
        const auto& c = j.at("config");
        ModelConfig cfg;
        cfg.hidden_dim = c.at("hidden_dim").get<std::size_t>();
        cfg.gcn_layers = c.at("gcn_layers").get<std::size_t>();
        cfg.head_widths = c.at("head_widths").get<std::vector<std::size_t>>();
        cfg.scheme = scheme_from_name(c.at("scheme").get<std::string>());
        cfg.norm = c.at("norm").get<int>();
        cfg.feature_schema_version = schema;

        ModelParams mp = init_model(cfg, 0);
        const auto& s = j.at("scaling");
        mp.scaling.node_mean = s.at("node_mean").get<std::vector<double>>();
        mp.scaling.node_scale = s.at("node_scale").get<std::vector<double>>();
        mp.scaling.global_mean = s.at("global_mean").get<std::vector<double>>();
        mp.scaling.global_scale = s.at("global_scale").get<std::vector<double>>();
        if (mp.scaling.node_mean.size() != kNodeFeatureDim || mp.scaling.node_scale.size() != kNodeFeatureDim ||
            mp.scaling.global_mean.size() != kNumGlobalFeatures || mp.scaling.global_scale.size() != kNumGlobalFeatures) {
            throw ConfigError("model: input scaling has the wrong dimensions");
        }

        const auto& params = j.at("parameters");
        if (params.size() != mp.store.all().size()) {
            throw ConfigError("model: expected " + std::to_string(mp.store.all().size()) + " parameter tensors, found " +
                              std::to_string(params.size()));
        }
        for (const auto& pj : params) {
            const auto name = pj.at("name").get<std::string>();
            if (!mp.store.contains(name)) {
                throw ConfigError("model: unexpected parameter '" + name + "'");
            }
            auto& p = mp.store.get(name);
            if (pj.at("shape").get<std::vector<std::size_t>>() != p.value.shape()) {
                throw ConfigError("model: shape mismatch for parameter '" + name + "'");
            }
            auto values = pj.at("values").get<std::vector<double>>();
            if (values.size() != p.value.size()) {
                throw ConfigError("model: value count mismatch for parameter '" + name + "'");
            }
            p.value.data() = std::move(values);
        }
        return mp;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model: malformed JSON: ") + e.what());
    }
}

inline void save_model(const ModelParams& mp, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("save_model: cannot open " + path);
    }
    out << model_to_json(mp).dump(1) << '\n';
    if (!out) {
        throw ConfigError("save_model: write failed for " + path);
    }
}

inline ModelParams load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("load_model: cannot open " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_model: " + path + " is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

}  // namespace condest
