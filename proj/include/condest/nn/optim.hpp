#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "condest/error.hpp"
#include "condest/nn/params.hpp"

namespace condest::nn {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 100;
    int batch_size = 32;
    int early_stop_patience = 20;
    double plateau_factor = 0.5;
    int plateau_patience = 10;
    double clip_threshold = 1.0;
    double dropout_rate = 0.1;
    double l2_lambda = 1e-5;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0 && beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1 && adam_eps > 0 && epochs > 0 &&
              batch_size > 0 && early_stop_patience > 0 && plateau_factor > 0 && plateau_factor < 1 &&
              plateau_patience > 0 && clip_threshold > 0 && l2_lambda >= 0)) {
            throw ConfigError("TrainConfig: all settings must be positive (betas and plateau factor in (0, 1))");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
            throw ConfigError("TrainConfig: dropout must lie in [0, 1)");
        }
    }
};

/// One bias-corrected Adam update using the gradients currently in `store`.
inline void adam_step(ParamStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++store.step;
    const double t = static_cast<double>(store.step);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (auto& p : store.all()) {
        auto& w = p.value.data();
        const auto& g = p.grad.data();
        auto& m = p.m.data();
        auto& v = p.v.data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            w[k] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

inline void adam_step(ParamStore& store, const TrainConfig& cfg, double lr) {
    adam_step(store, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
}

inline double global_grad_norm(const ParamStore& store) {
    double s = 0.0;
    for (const auto& p : store.all()) {
        for (double g : p.grad.data()) s += g * g;
    }
    return std::sqrt(s);
}

/// Rescales all gradients by tau / g when the global 2-norm g exceeds tau.
/// Returns the norm before clipping.
inline double clip_global_norm(ParamStore& store, double tau) {
    const double g = global_grad_norm(store);
    if (g > tau) {
        const double scale = tau / g;
        for (auto& p : store.all()) {
            for (double& x : p.grad.data()) x *= scale;
        }
    }
    return g;
}

/// Reduce-on-plateau learning-rate schedule. An epoch improves only if its
/// validation loss is strictly below the best so far; after `patience`
/// consecutive non-improving epochs the rate is multiplied by `factor` and
/// the counter restarts.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, double factor, int patience) : lr_(lr), factor_(factor), patience_(patience) {}

    double step(double val_loss) {
        if (val_loss < best_) {
            best_ = val_loss;
            bad_epochs_ = 0;
        } else if (++bad_epochs_ >= patience_) {
            lr_ *= factor_;
            bad_epochs_ = 0;
        }
        return lr_;
    }

    double lr() const noexcept { return lr_; }

private:
    double lr_;
    double factor_;
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_epochs_ = 0;
};

/// Replays a validation-loss history through the schedule and returns the
/// resulting learning rate.
inline double plateau_scheduler(std::span<const double> history, const TrainConfig& cfg) {
    PlateauScheduler s(cfg.lr, cfg.plateau_factor, cfg.plateau_patience);
    for (double v : history) s.step(v);
    return s.lr();
}

}  // namespace condest::nn
