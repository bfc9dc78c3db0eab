#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "condest/error.hpp"
#include "condest/gen/dataset.hpp"
#include "condest/model/gnn.hpp"
#include "condest/nn/autodiff.hpp"
#include "condest/nn/optim.hpp"

namespace condest {

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> lr;
    std::vector<double> wall_time;  // seconds since training start
    int best_epoch = 0;             // 1-based
    double best_val_loss = std::numeric_limits<double>::infinity();

    std::size_t epochs() const { return train_loss.size(); }
};

inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
    out << "epoch,train_loss,val_loss,lr,wall_time\n";
    // shortest text that round-trips each double
    auto num = [](double x) {
        char buf[64];
        return std::string(buf, std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general).ptr);
    };
    char wall[64];
    for (std::size_t e = 0; e < h.epochs(); ++e) {
        std::snprintf(wall, sizeof(wall), "%.6f", h.wall_time[e]);
        out << e + 1 << ',' << num(h.train_loss[e]) << ',' << num(h.val_loss[e]) << ',' << num(h.lr[e]) << ',' << wall
            << '\n';
    }
}

/// Training examples: prepared graphs with targets and ids.
struct PreparedSet {
    std::vector<PreparedGraph> graphs;
    std::vector<double> targets;
    std::vector<std::string> ids;
};

/// Fits per-column mean/std standardization on the training graphs.
/// Columns with (near) zero spread keep scale 1.
inline InputScaling fit_scaling(const std::vector<MatrixGraph>& graphs) {
    InputScaling s;
    std::vector<detail::RunningStats> node(kNodeFeatureDim), global(kNumGlobalFeatures);
    for (const auto& g : graphs) {
        for (Index i = 0; i < g.n; ++i) {
            for (std::size_t c = 0; c < kNodeFeatureDim; ++c) node[c].add(g.node_features[i * kNodeFeatureDim + c]);
        }
        for (std::size_t c = 0; c < kNumGlobalFeatures; ++c) global[c].add(g.global.values[c]);
    }
    // A spread at rounding level (e.g. log(||A||_1 / ||A||_inf) on symmetric
    // inputs) is noise; dividing by it would amplify summation-order effects.
    auto scale = [](const detail::RunningStats& st) {
        const double sd = st.population_std();
        return sd > 1e-6 * std::max(1.0, std::abs(st.safe_mean())) ? sd : 1.0;
    };
    for (std::size_t c = 0; c < kNodeFeatureDim; ++c) {
        s.node_mean[c] = node[c].safe_mean();
        s.node_scale[c] = scale(node[c]);
    }
    for (std::size_t c = 0; c < kNumGlobalFeatures; ++c) {
        s.global_mean[c] = global[c].safe_mean();
        s.global_scale[c] = scale(global[c]);
    }
    return s;
}

inline PreparedSet prepare_set(const std::vector<LabeledMatrix>& items, const std::vector<MatrixGraph>& graphs,
                               const ModelParams& mp) {
    PreparedSet out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out.graphs.push_back(prepare_graph(graphs[i], mp.scaling));
        out.targets.push_back(target_for(mp.config.scheme, mp.config.norm, items[i]));
        out.ids.push_back(items[i].id);
    }
    return out;
}

/// Eval-mode mean squared error over a prepared set.
inline double evaluate_mse(const PreparedSet& set, ModelParams& mp, std::size_t batch_size = 64) {
    double sum = 0.0;
    for (std::size_t start = 0; start < set.graphs.size(); start += batch_size) {
        const std::size_t end = std::min(set.graphs.size(), start + batch_size);
        std::vector<const PreparedGraph*> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(&set.graphs[i]);
        const auto preds = predict_batch(batch, mp);
        for (std::size_t i = start; i < end; ++i) {
            const double d = preds[i - start] - set.targets[i];
            sum += d * d;
        }
    }
    return set.graphs.empty() ? 0.0 : sum / static_cast<double>(set.graphs.size());
}

struct TrainResult {
    ModelParams params;
    TrainHistory history;
};

struct TrainHooks {
    /// Called after every epoch with (epoch, train_loss, val_loss, lr).
    std::function<void(int, double, double, double)> on_epoch;
};

/// Mini-batch Adam on MSE + L2 with gradient clipping, reduce-on-plateau
/// scheduling and early stopping. The returned parameters are those of the
/// epoch with the lowest validation loss.
///
/// The recorded train loss is the data term (MSE) averaged over the epoch's
/// batches in train mode; the L2 term is optimized but not reported.
inline TrainResult train(const std::vector<LabeledMatrix>& train_items, const std::vector<LabeledMatrix>& val_items,
                         const ModelConfig& model_cfg, const nn::TrainConfig& cfg, const TrainHooks& hooks = {}) {
    model_cfg.validate();
    cfg.validate();
    if (train_items.empty() || val_items.empty()) {
        throw ConfigError("train: training and validation splits must be nonempty");
    }
    const bool need_norm2 = false;
    std::vector<MatrixGraph> train_graphs, val_graphs;
    for (const auto& lm : train_items) train_graphs.push_back(build_graph(lm.matrix, need_norm2));
    for (const auto& lm : val_items) val_graphs.push_back(build_graph(lm.matrix, need_norm2));

    TrainResult result;
    ModelParams& mp = result.params;
    mp = init_model(model_cfg, cfg.seed);
    mp.scaling = fit_scaling(train_graphs);
    const PreparedSet train_set = prepare_set(train_items, train_graphs, mp);
    const PreparedSet val_set = prepare_set(val_items, val_graphs, mp);

    // Output bias starts at the mean target so the head begins centred on
    // the label distribution.
    {
        const double mean = std::accumulate(train_set.targets.begin(), train_set.targets.end(), 0.0) /
                            static_cast<double>(train_set.targets.size());
        mp.store.get(ModelParams::head_b(model_cfg.head_layers() - 1)).value[0] = mean;
    }

    CounterRng shuffle_rng(hash_words({cfg.seed, 0x73687566ULL}));
    CounterRng dropout_rng(hash_words({cfg.seed, 0x64726F70ULL}));
    nn::PlateauScheduler scheduler(cfg.lr, cfg.plateau_factor, cfg.plateau_patience);
    double lr = cfg.lr;
    auto best = mp.store.snapshot();
    int since_best = 0;
    const auto t_start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_set.graphs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const PreparedGraph*> graphs;
            std::vector<double> targets;
            for (std::size_t i = start; i < end; ++i) {
                graphs.push_back(&train_set.graphs[order[i]]);
                targets.push_back(train_set.targets[order[i]]);
            }
            const GraphBatch batch = make_batch(graphs);
            nn::Tape tape;
            std::vector<nn::Var> vars;
            mp.store.zero_grad();
            try {
                const nn::Var out =
                    forward_batch(tape, batch, mp, {true, cfg.dropout_rate, &dropout_rng}, vars, true);
                const nn::Var data_loss = nn::mse(out, targets);
                nn::Var loss = data_loss;
                std::size_t idx = 0;
                for (auto& p : mp.store.all()) {
                    if (p.is_weight && cfg.l2_lambda > 0.0) {
                        loss = nn::add_scaled(loss, nn::sum_squares(vars[idx]), cfg.l2_lambda);
                    }
                    ++idx;
                }
                tape.backward(loss);
                loss_sum += data_loss.value()[0] * static_cast<double>(end - start);
            } catch (const NumericalError& e) {
                std::string ids;
                for (std::size_t i = start; i < end; ++i) ids += (ids.empty() ? "" : ", ") + train_set.ids[order[i]];
                throw NumericalError(std::string("train: ") + e.what() + " in epoch " + std::to_string(epoch) +
                                     " batch {" + ids + "}");
            }
            nn::clip_global_norm(mp.store, cfg.clip_threshold);
            nn::adam_step(mp.store, cfg, lr);
            for (const auto& p : mp.store.all()) {
                if (!p.value.all_finite()) {
                    throw NumericalError("train: parameter " + p.name + " became non-finite in epoch " +
                                         std::to_string(epoch));
                }
            }
        }
        const double train_loss = loss_sum / static_cast<double>(order.size());
        const double val_loss = evaluate_mse(val_set, mp);
        auto& h = result.history;
        h.train_loss.push_back(train_loss);
        h.val_loss.push_back(val_loss);
        h.lr.push_back(lr);
        h.wall_time.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count());
        if (hooks.on_epoch) hooks.on_epoch(epoch, train_loss, val_loss, lr);

        if (val_loss < h.best_val_loss) {
            h.best_val_loss = val_loss;
            h.best_epoch = epoch;
            best = mp.store.snapshot();
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
        lr = scheduler.step(val_loss);
    }
    mp.store.restore(best);
    mp.store.zero_grad();
    mp.store.reset_optimizer();
    return result;
}

inline TrainResult train(const Dataset& ds, const ModelConfig& model_cfg, const nn::TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
    return train(ds.train, ds.val, model_cfg, cfg, hooks);
}

}  // namespace condest
