#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "condest/error.hpp"
#include "condest/nn/tensor.hpp"
#include "condest/rng.hpp"

namespace condest::nn {

/// A learnable tensor with its gradient slot and Adam moments.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
    /// Weight matrices take part in the L2 penalty; biases do not.
    bool is_weight = false;
};

/// Ordered collection of named parameters plus the Adam step counter.
class ParamStore {
public:
    Parameter& add(const std::string& name, Tensor value, bool is_weight) {
        if (index_.count(name) != 0) {
            throw InvalidArgument("ParamStore: duplicate parameter '" + name + "'");
        }
        Parameter p;
        p.name = name;
        p.grad = Tensor(value.shape(), 0.0);
        p.m = Tensor(value.shape(), 0.0);
        p.v = Tensor(value.shape(), 0.0);
        p.value = std::move(value);
        p.is_weight = is_weight;
        index_[name] = params_.size();
        params_.push_back(std::move(p));
        return params_.back();
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Parameter& get(const std::string& name) {
        const auto it = index_.find(name);
        if (it == index_.end()) {
            throw InvalidArgument("ParamStore: no parameter '" + name + "'");
        }
        return params_[it->second];
    }
    const Parameter& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }

    std::vector<Parameter>& all() noexcept { return params_; }
    const std::vector<Parameter>& all() const noexcept { return params_; }

    std::size_t count() const {
        std::size_t c = 0;
        for (const auto& p : params_) c += p.value.size();
        return c;
    }

    void zero_grad() {
        for (auto& p : params_) p.grad.fill(0.0);
    }

    /// Resets Adam moments and the step counter.
    void reset_optimizer() {
        for (auto& p : params_) {
            p.m.fill(0.0);
            p.v.fill(0.0);
        }
        step = 0;
    }

    /// Copies parameter values only (used to snapshot/restore best weights).
    std::vector<Tensor> snapshot() const {
        std::vector<Tensor> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p.value);
        return out;
    }
    void restore(const std::vector<Tensor>& values) {
        if (values.size() != params_.size()) {
            throw DimensionError("ParamStore::restore: snapshot size mismatch");
        }
        for (std::size_t i = 0; i < values.size(); ++i) params_[i].value = values[i];
    }

    std::int64_t step = 0;

private:
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

/// Glorot-uniform initialization for an out x in weight matrix.
inline Tensor glorot_uniform(std::size_t out, std::size_t in, CounterRng& rng) {
    Tensor w = Tensor::matrix(out, in);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& x : w.data()) x = rng.uniform(-limit, limit);
    return w;
}

}  // namespace condest::nn
