#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "condest/error.hpp"
#include "condest/features/features.hpp"
#include "condest/gen/dataset.hpp"
#include "condest/nn/autodiff.hpp"
#include "condest/nn/params.hpp"
#include "condest/rng.hpp"
#include "condest/sparse/csr.hpp"

namespace condest {

/// What the network output g~ is trained to approximate (in log10 space).
enum class Scheme : int {
    /// log10 ||A^{-1}||; estimate is ||A|| * 10^g~.
    PredictInverseNorm = 1,
    /// log10 kappa; estimate is 10^g~.
    PredictKappa = 2,
};

inline std::string scheme_name(Scheme s) { return s == Scheme::PredictInverseNorm ? "inverse_norm" : "kappa"; }

inline Scheme scheme_from_name(const std::string& s) {
    if (s == "inverse_norm" || s == "1" || s == "scheme1") return Scheme::PredictInverseNorm;
    if (s == "kappa" || s == "2" || s == "scheme2") return Scheme::PredictKappa;
    throw ConfigError("unknown scheme '" + s + "' (expected inverse_norm or kappa)");
}

struct ModelConfig {
    std::size_t hidden_dim = 64;
    std::size_t gcn_layers = 3;
    /// Hidden widths of the prediction head; the head has
    /// head_widths.size() + 1 linear layers and input width 3 * hidden_dim.
    std::vector<std::size_t> head_widths{256, 128};
    Scheme scheme = Scheme::PredictInverseNorm;
    int norm = 1;
    int feature_schema_version = kFeatureSchemaVersion;

    void validate() const {
        if (hidden_dim < 1 || gcn_layers < 1 || head_widths.empty()) {
            throw ConfigError("ModelConfig: need hidden_dim >= 1, gcn_layers >= 1 and at least one head hidden layer");
        }
        for (auto w : head_widths) {
            if (w < 1) throw ConfigError("ModelConfig: head widths must be >= 1");
        }
        if (norm != 1 && norm != 2) {
            throw ConfigError("ModelConfig: norm must be 1 or 2");
        }
    }
    std::size_t head_layers() const { return head_widths.size() + 1; }
};

/// Affine input standardization fitted on the training split. Identity by
/// default.
struct InputScaling {
    std::vector<double> node_mean = std::vector<double>(kNodeFeatureDim, 0.0);
    std::vector<double> node_scale = std::vector<double>(kNodeFeatureDim, 1.0);
    std::vector<double> global_mean = std::vector<double>(kNumGlobalFeatures, 0.0);
    std::vector<double> global_scale = std::vector<double>(kNumGlobalFeatures, 1.0);

    friend bool operator==(const InputScaling&, const InputScaling&) = default;
};

/// All learnable weights plus the configuration they were built for.
struct ModelParams {
    ModelConfig config;
    InputScaling scaling;
    nn::ParamStore store;

    static std::string gcn_name(std::size_t k) { return "gcn." + std::to_string(k) + ".W"; }
    static std::string head_w(std::size_t l) { return "head." + std::to_string(l) + ".W"; }
    static std::string head_b(std::size_t l) { return "head." + std::to_string(l) + ".b"; }
};

/// Glorot-uniform weights, zero biases.
inline ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams mp;
    mp.config = cfg;
    CounterRng rng(hash_words({seed, 0x696E6974ULL}));
    const std::size_t h = cfg.hidden_dim;
    mp.store.add("node.W", nn::glorot_uniform(h, kNodeFeatureDim, rng), true);
    for (std::size_t k = 0; k < cfg.gcn_layers; ++k) {
        mp.store.add(ModelParams::gcn_name(k), nn::glorot_uniform(h, h, rng), true);
    }
    mp.store.add("global.W", nn::glorot_uniform(h, kNumGlobalFeatures, rng), true);
    mp.store.add("global.b", nn::Tensor::vector(h), false);
    std::size_t in = 3 * h;
    for (std::size_t l = 0; l < cfg.head_layers(); ++l) {
        const std::size_t out = l < cfg.head_widths.size() ? cfg.head_widths[l] : 1;
        mp.store.add(ModelParams::head_w(l), nn::glorot_uniform(out, in, rng), true);
        mp.store.add(ModelParams::head_b(l), nn::Tensor::vector(out), false);
        in = out;
    }
    return mp;
}

/// Sets every parameter to zero.
inline void zero_parameters(ModelParams& mp) {
    for (auto& p : mp.store.all()) p.value.fill(0.0);
}

// ---------------------------------------------------------------------------
// Graph batches

/// Model-ready view of one graph: standardized inputs and the
/// degree-normalized propagation operator.
struct PreparedGraph {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::size_t> col_idx;
    /// 1 / sqrt(|N(i)| |N(j)|) for each edge (i, j).
    std::vector<double> coef;
    std::vector<double> node_inputs;    // n x 2
    std::vector<double> global_inputs;  // 29
};

inline PreparedGraph prepare_graph(const MatrixGraph& g, const InputScaling& s) {
    PreparedGraph p;
    p.n = static_cast<std::size_t>(g.n);
    p.row_ptr.assign(g.row_ptr.begin(), g.row_ptr.end());
    p.col_idx.assign(g.col_idx.begin(), g.col_idx.end());
    p.coef.resize(p.col_idx.size());
    for (std::size_t i = 0; i < p.n; ++i) {
        const double di = static_cast<double>(p.row_ptr[i + 1] - p.row_ptr[i]);
        for (std::size_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
            const std::size_t j = p.col_idx[k];
            const double dj = static_cast<double>(p.row_ptr[j + 1] - p.row_ptr[j]);
            // j has at least one edge only if it is a row with nonzeros; an
            // isolated target contributes nothing.
            p.coef[k] = dj > 0.0 ? 1.0 / std::sqrt(di * dj) : 0.0;
        }
    }
    p.node_inputs.resize(p.n * kNodeFeatureDim);
    for (std::size_t i = 0; i < p.n; ++i) {
        for (std::size_t c = 0; c < kNodeFeatureDim; ++c) {
            p.node_inputs[i * kNodeFeatureDim + c] =
                (g.node_features[i * kNodeFeatureDim + c] - s.node_mean[c]) / s.node_scale[c];
        }
    }
    p.global_inputs.resize(kNumGlobalFeatures);
    for (std::size_t c = 0; c < kNumGlobalFeatures; ++c) {
        p.global_inputs[c] = (g.global.values[c] - s.global_mean[c]) / s.global_scale[c];
    }
    return p;
}

/// Disjoint union of graphs with per-graph pooling segments.
struct GraphBatch {
    std::shared_ptr<const nn::SparseOperator> propagation;
    nn::Tensor node_inputs;    // N x 2
    nn::Tensor global_inputs;  // B x 29
    std::vector<std::size_t> offsets;
};

inline GraphBatch make_batch(const std::vector<const PreparedGraph*>& graphs) {
    std::size_t total = 0;
    for (const auto* g : graphs) total += g->n;
    auto op = std::make_shared<nn::SparseOperator>();
    op->rows = total;
    op->row_ptr.reserve(total + 1);
    op->row_ptr.push_back(0);
    GraphBatch b;
    b.node_inputs = nn::Tensor::matrix(total, kNodeFeatureDim);
    b.global_inputs = nn::Tensor::matrix(graphs.size(), kNumGlobalFeatures);
    b.offsets.push_back(0);
    std::size_t base = 0;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const PreparedGraph& g = *graphs[gi];
        for (std::size_t i = 0; i < g.n; ++i) {
            for (std::size_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
                op->col_idx.push_back(base + g.col_idx[k]);
                op->coef.push_back(g.coef[k]);
            }
            op->row_ptr.push_back(op->col_idx.size());
        }
        std::copy(g.node_inputs.begin(), g.node_inputs.end(), b.node_inputs.data().begin() + static_cast<std::ptrdiff_t>(base * kNodeFeatureDim));
        std::copy(g.global_inputs.begin(), g.global_inputs.end(),
                  b.global_inputs.data().begin() + static_cast<std::ptrdiff_t>(gi * kNumGlobalFeatures));
        base += g.n;
        b.offsets.push_back(base);
    }
    b.propagation = std::move(op);
    return b;
}

struct ForwardOptions {
    bool train_mode = false;
    double dropout_rate = 0.0;
    CounterRng* rng = nullptr;
};

/// Records the batched forward pass on `tape` and returns the B x 1 output.
/// `param_vars` receives the tape leaves of the parameters (store order).
inline nn::Var forward_batch(nn::Tape& tape, const GraphBatch& batch, ModelParams& mp, const ForwardOptions& opt,
                             std::vector<nn::Var>& param_vars, bool track_gradients) {
    using namespace nn;
    param_vars.clear();
    for (auto& p : mp.store.all()) {
        param_vars.push_back(track_gradients ? tape.param(p) : tape.constant(p.value));
    }
    auto pv = [&](const std::string& name) {
        const auto& all = mp.store.all();
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (all[i].name == name) return param_vars[i];
        }
        throw InvalidArgument("forward: missing parameter " + name);
    };
    if (opt.train_mode && opt.dropout_rate > 0.0 && opt.rng == nullptr) {
        throw InvalidArgument("forward: dropout in train mode needs an rng");
    }
    const ModelConfig& cfg = mp.config;

    Var h = relu(linear(tape.constant(batch.node_inputs), pv("node.W")));
    for (std::size_t k = 0; k < cfg.gcn_layers; ++k) {
        h = relu(linear(sparse_apply(batch.propagation, h), pv(ModelParams::gcn_name(k))));
    }
    const Var z_mean = segment_mean(h, batch.offsets);
    const Var z_max = segment_max(h, batch.offsets);
    const Var u = relu(linear(tape.constant(batch.global_inputs), pv("global.W"), pv("global.b")));

    Var x = concat_cols({z_mean, z_max, u});
    CounterRng dummy;
    CounterRng& rng = opt.rng != nullptr ? *opt.rng : dummy;
    for (std::size_t l = 0; l + 1 < cfg.head_layers(); ++l) {
        x = linear(x, pv(ModelParams::head_w(l)), pv(ModelParams::head_b(l)));
        if (l < 2) {
            x = dropout(x, opt.dropout_rate, opt.train_mode, rng);
        }
        x = relu(x);
    }
    const std::size_t last = cfg.head_layers() - 1;
    return linear(x, pv(ModelParams::head_w(last)), pv(ModelParams::head_b(last)));
}

/// Eval-mode outputs for a list of graphs, one batch.
inline std::vector<double> predict_batch(const std::vector<const PreparedGraph*>& graphs, ModelParams& mp) {
    nn::Tape tape;
    std::vector<nn::Var> vars;
    const GraphBatch batch = make_batch(graphs);
    const nn::Var out = forward_batch(tape, batch, mp, {}, vars, false);
    return out.value().data();
}

/// Scalar output g~(A) for a single graph.
inline double forward(const MatrixGraph& g, ModelParams& mp, bool train_mode = false, double dropout_rate = 0.0,
                      CounterRng* rng = nullptr) {
    if (mp.config.feature_schema_version != kFeatureSchemaVersion) {
        throw ConfigError("forward: model feature schema does not match the extractor");
    }
    const PreparedGraph p = prepare_graph(g, mp.scaling);
    nn::Tape tape;
    std::vector<nn::Var> vars;
    const GraphBatch batch = make_batch({&p});
    const nn::Var out = forward_batch(tape, batch, mp, {train_mode, dropout_rate, rng}, vars, false);
    return out.value()[0];
}

/// Training target in log10 space for the given scheme and norm.
inline double target_for(Scheme scheme, int norm, double kappa, double matrix_norm) {
    if (!(kappa >= 1.0) || !std::isfinite(kappa)) {
        throw LabelError("target_for: condition number must be finite and >= 1");
    }
    if (!(matrix_norm > 0.0) || !std::isfinite(matrix_norm)) {
        throw LabelError("target_for: matrix norm must be positive");
    }
    if (norm != 1 && norm != 2) {
        throw LabelError("target_for: norm must be 1 or 2");
    }
    return scheme == Scheme::PredictInverseNorm ? std::log10(kappa) - std::log10(matrix_norm) : std::log10(kappa);
}

inline double target_for(Scheme scheme, int norm, const LabeledMatrix& lm) {
    return target_for(scheme, norm, lm.kappa(norm), lm.norm(norm));
}

/// Output range accepted before exponentiation, in decades.
inline constexpr double kMaxDecades = 30.0;

/// Condition-number estimate with the learned-method time decomposition.
struct Prediction {
    double kappa_hat = 0.0;
    double log10_output = 0.0;
    double matrix_norm = 0.0;
    double t_feature = 0.0;    // seconds: graph construction + global features
    double t_inference = 0.0;  // seconds: forward pass
    double t_norm = 0.0;       // seconds: ||A|| and the final formula (Scheme 1 only)

    double total() const { return t_feature + t_inference + t_norm; }
};

inline Prediction predict_cond(const CsrMatrix& a, ModelParams& mp) {
    using clock = std::chrono::steady_clock;
    const auto secs = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
    Prediction out;
    const auto t0 = clock::now();
    MatrixGraph g = build_graph_features(a);
    const auto t1 = clock::now();
    const double raw = forward(g, mp);
    const double g_tilde = std::clamp(raw, -kMaxDecades, kMaxDecades);
    const auto t2 = clock::now();
    out.log10_output = raw;
    if (mp.config.scheme == Scheme::PredictInverseNorm) {
        out.matrix_norm = mp.config.norm == 1 ? norm_1(a) : power_norm_2(a);
        out.kappa_hat = out.matrix_norm * std::pow(10.0, g_tilde);
        const auto t3 = clock::now();
        out.t_norm = secs(t2, t3);
    } else {
        out.kappa_hat = std::pow(10.0, g_tilde);
    }
    out.t_feature = secs(t0, t1);
    out.t_inference = secs(t1, t2);
    return out;
}

}  // namespace condest
