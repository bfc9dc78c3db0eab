#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "condest/error.hpp"
#include "condest/nn/params.hpp"
#include "condest/nn/tensor.hpp"
#include "condest/rng.hpp"

namespace condest::nn {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
};

/// Reverse-mode tape. Each forward op appends a node holding its value and a
/// closure that pushes the node's gradient to its inputs. Parameter leaves
/// add their gradient into Parameter::grad during backward().
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Var constant(Tensor value) { return push(std::move(value), nullptr, false, "constant"); }

    Var param(Parameter& p) {
        Var v = push(p.value, nullptr, true, p.name.c_str());
        nodes_[v.id].param = &p;
        return v;
    }

    /// Records an op result. Throws NumericalError on non-finite output.
    Var push(Tensor value, BackwardFn backward, bool needs_grad, const char* op) {
        if (!value.all_finite()) {
            throw NumericalError(std::string("non-finite value produced by ") + op);
        }
        nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward), needs_grad, nullptr});
        return Var{this, nodes_.size() - 1};
    }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

    /// Gradient slot of a node, allocated on first use.
    Tensor& grad(Var v) {
        Node& node = nodes_[v.id];
        if (node.grad.size() != node.value.size()) {
            node.grad = Tensor(node.value.shape(), 0.0);
        }
        return node.grad;
    }

    /// Back-propagates from a scalar root.
    void backward(Var root) {
        if (value(root).size() != 1) {
            throw DimensionError("Tape::backward: root must be a scalar");
        }
        grad(root)[0] = 1.0;
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node& node = nodes_[i];
            if (!node.needs_grad || node.grad.size() == 0) {
                continue;
            }
            if (node.param != nullptr) {
                auto& dst = node.param->grad.data();
                const auto& src = node.grad.data();
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            }
            if (node.backward) {
                node.backward(*this, node.grad);
            }
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        bool needs_grad = false;
        Parameter* param = nullptr;
    };
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Ops

/// y = x W^T + b with x: N x in, W: out x in, b: out (optional).
inline Var linear(Var x, Var w, const Var* b = nullptr) {
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const std::size_t n = X.rows(), in = X.cols(), out = W.rows();
    if (W.cols() != in || (b != nullptr && t.value(*b).size() != out)) {
        throw DimensionError("linear: shape mismatch x" + shape_string(X) + " W" + shape_string(W));
    }
    Tensor Y = Tensor::matrix(n, out);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xr = &X.data()[i * in];
        double* yr = &Y.data()[i * out];
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = &W.data()[o * in];
            double s = 0.0;
            for (std::size_t k = 0; k < in; ++k) s += xr[k] * wr[k];
            yr[o] = s;
        }
        if (b != nullptr) {
            const Tensor& B = t.value(*b);
            for (std::size_t o = 0; o < out; ++o) yr[o] += B[o];
        }
    }
    const bool has_b = b != nullptr;
    const Var bv = has_b ? *b : Var{};
    const bool ng = t.needs_grad(x) || t.needs_grad(w) || (has_b && t.needs_grad(bv));
    return t.push(
        std::move(Y),
        [x, w, bv, has_b, n, in, out](Tape& t, const Tensor& dY) {
            const Tensor& X = t.value(x);
            const Tensor& W = t.value(w);
            if (t.needs_grad(x)) {
                Tensor& dX = t.grad(x);
                for (std::size_t i = 0; i < n; ++i) {
                    double* dxr = &dX.data()[i * in];
                    const double* dyr = &dY.data()[i * out];
                    for (std::size_t o = 0; o < out; ++o) {
                        const double g = dyr[o];
                        if (g == 0.0) continue;
                        const double* wr = &W.data()[o * in];
                        for (std::size_t k = 0; k < in; ++k) dxr[k] += g * wr[k];
                    }
                }
            }
            if (t.needs_grad(w)) {
                Tensor& dW = t.grad(w);
                for (std::size_t i = 0; i < n; ++i) {
                    const double* xr = &X.data()[i * in];
                    const double* dyr = &dY.data()[i * out];
                    for (std::size_t o = 0; o < out; ++o) {
                        const double g = dyr[o];
                        if (g == 0.0) continue;
                        double* dwr = &dW.data()[o * in];
                        for (std::size_t k = 0; k < in; ++k) dwr[k] += g * xr[k];
                    }
                }
            }
            if (has_b && t.needs_grad(bv)) {
                Tensor& dB = t.grad(bv);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t o = 0; o < out; ++o) dB[o] += dY.data()[i * out + o];
                }
            }
        },
        ng, "linear");
}

inline Var linear(Var x, Var w, Var b) { return linear(x, w, &b); }

inline Var relu(Var x) {
    Tape& t = *x.tape;
    Tensor Y = t.value(x);
    for (auto& y : Y.data()) y = y > 0.0 ? y : 0.0;
    return t.push(
        std::move(Y),
        [x](Tape& t, const Tensor& dY) {
            if (!t.needs_grad(x)) return;
            const Tensor& X = t.value(x);
            Tensor& dX = t.grad(x);
            for (std::size_t k = 0; k < X.size(); ++k) {
                if (X[k] > 0.0) dX[k] += dY[k];
            }
        },
        t.needs_grad(x), "relu");
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// q and survivors are scaled by 1 / (1 - q). Identity in eval mode or q = 0.
inline Var dropout(Var x, double q, bool train_mode, CounterRng& rng) {
    if (!(q >= 0.0 && q < 1.0)) {
        throw InvalidArgument("dropout: rate must lie in [0, 1)");
    }
    if (!train_mode || q == 0.0) {
        return x;
    }
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    auto mask = std::make_shared<std::vector<double>>(X.size());
    const double keep_scale = 1.0 / (1.0 - q);
    Tensor Y = X;
    for (std::size_t k = 0; k < X.size(); ++k) {
        (*mask)[k] = rng.uniform() < q ? 0.0 : keep_scale;
        Y[k] *= (*mask)[k];
    }
    return t.push(
        std::move(Y),
        [x, mask](Tape& t, const Tensor& dY) {
            if (!t.needs_grad(x)) return;
            Tensor& dX = t.grad(x);
            for (std::size_t k = 0; k < dY.size(); ++k) dX[k] += dY[k] * (*mask)[k];
        },
        t.needs_grad(x), "dropout");
}

/// Fixed sparse operator y_i = sum_k coef_k x_{col_k} over row i's entries.
struct SparseOperator {
    std::size_t rows = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::size_t> col_idx;
    std::vector<double> coef;
};

/// Y = P X for a constant sparse operator P.
inline Var sparse_apply(std::shared_ptr<const SparseOperator> op, Var x) {
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const std::size_t c = X.cols();
    Tensor Y = Tensor::matrix(op->rows, c);
    for (std::size_t i = 0; i < op->rows; ++i) {
        double* yr = &Y.data()[i * c];
        for (std::size_t k = op->row_ptr[i]; k < op->row_ptr[i + 1]; ++k) {
            const double a = op->coef[k];
            const double* xr = &X.data()[op->col_idx[k] * c];
            for (std::size_t j = 0; j < c; ++j) yr[j] += a * xr[j];
        }
    }
    return t.push(
        std::move(Y),
        [op, x, c](Tape& t, const Tensor& dY) {
            if (!t.needs_grad(x)) return;
            Tensor& dX = t.grad(x);
            for (std::size_t i = 0; i < op->rows; ++i) {
                const double* dyr = &dY.data()[i * c];
                for (std::size_t k = op->row_ptr[i]; k < op->row_ptr[i + 1]; ++k) {
                    const double a = op->coef[k];
                    double* dxr = &dX.data()[op->col_idx[k] * c];
                    for (std::size_t j = 0; j < c; ++j) dxr[j] += a * dyr[j];
                }
            }
        },
        t.needs_grad(x), "sparse_apply");
}

/// Per-segment column means. Segment s covers rows [offsets[s], offsets[s+1]).
inline Var segment_mean(Var x, std::vector<std::size_t> offsets) {
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const std::size_t c = X.cols();
    const std::size_t g = offsets.size() - 1;
    Tensor Y = Tensor::matrix(g, c);
    for (std::size_t s = 0; s < g; ++s) {
        const std::size_t len = offsets[s + 1] - offsets[s];
        if (len == 0) continue;
        double* yr = &Y.data()[s * c];
        for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) {
            for (std::size_t j = 0; j < c; ++j) yr[j] += X.data()[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) yr[j] /= static_cast<double>(len);
    }
    return t.push(
        std::move(Y),
        [x, offsets = std::move(offsets), c, g](Tape& t, const Tensor& dY) {
            if (!t.needs_grad(x)) return;
            Tensor& dX = t.grad(x);
            for (std::size_t s = 0; s < g; ++s) {
                const std::size_t len = offsets[s + 1] - offsets[s];
                if (len == 0) continue;
                const double inv = 1.0 / static_cast<double>(len);
                for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) {
                    for (std::size_t j = 0; j < c; ++j) dX.data()[i * c + j] += dY.data()[s * c + j] * inv;
                }
            }
        },
        t.needs_grad(x), "segment_mean");
}

/// Per-segment element-wise maxima. Ties route the gradient to the first
/// maximal row.
inline Var segment_max(Var x, const std::vector<std::size_t>& offsets) {
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const std::size_t c = X.cols();
    const std::size_t g = offsets.size() - 1;
    Tensor Y = Tensor::matrix(g, c);
    auto argmax = std::make_shared<std::vector<std::size_t>>(g * c, std::numeric_limits<std::size_t>::max());
    for (std::size_t s = 0; s < g; ++s) {
        for (std::size_t j = 0; j < c; ++j) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) {
                const double v = X.data()[i * c + j];
                if (v > best) {
                    best = v;
                    (*argmax)[s * c + j] = i;
                }
            }
            Y.data()[s * c + j] = offsets[s + 1] > offsets[s] ? best : 0.0;
        }
    }
    return t.push(
        std::move(Y),
        [x, argmax, c, g](Tape& t, const Tensor& dY) {
            if (!t.needs_grad(x)) return;
            Tensor& dX = t.grad(x);
            for (std::size_t s = 0; s < g; ++s) {
                for (std::size_t j = 0; j < c; ++j) {
                    const std::size_t i = (*argmax)[s * c + j];
                    if (i != std::numeric_limits<std::size_t>::max()) dX.data()[i * c + j] += dY.data()[s * c + j];
                }
            }
        },
        t.needs_grad(x), "segment_max");
}

/// Horizontal concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
    Tape& t = *parts.front().tape;
    const std::size_t n = t.value(parts.front()).rows();
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    bool ng = false;
    for (const Var& p : parts) {
        if (t.value(p).rows() != n) {
            throw DimensionError("concat_cols: row count mismatch");
        }
        widths.push_back(t.value(p).cols());
        total += widths.back();
        ng = ng || t.needs_grad(p);
    }
    Tensor Y = Tensor::matrix(n, total);
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor& P = t.value(parts[p]);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < widths[p]; ++j) Y.data()[i * total + off + j] = P.data()[i * widths[p] + j];
        }
        off += widths[p];
    }
    return t.push(
        std::move(Y),
        [parts, widths, n, total](Tape& t, const Tensor& dY) {
            std::size_t off = 0;
            for (std::size_t p = 0; p < parts.size(); ++p) {
                if (t.needs_grad(parts[p])) {
                    Tensor& dP = t.grad(parts[p]);
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < widths[p]; ++j) dP.data()[i * widths[p] + j] += dY.data()[i * total + off + j];
                    }
                }
                off += widths[p];
            }
        },
        ng, "concat_cols");
}

/// Mean squared error between an N x 1 prediction and N targets.
inline Var mse(Var pred, std::vector<double> targets) {
    Tape& t = *pred.tape;
    const Tensor& P = t.value(pred);
    if (P.size() != targets.size() || targets.empty()) {
        throw DimensionError("mse: prediction/target length mismatch or empty batch");
    }
    const double inv = 1.0 / static_cast<double>(targets.size());
    double s = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double d = P[i] - targets[i];
        s += d * d;
    }
    return t.push(
        Tensor::vector(1, s * inv),
        [pred, targets = std::move(targets), inv](Tape& t, const Tensor& dY) {
            if (!t.needs_grad(pred)) return;
            const Tensor& P = t.value(pred);
            Tensor& dP = t.grad(pred);
            for (std::size_t i = 0; i < targets.size(); ++i) dP[i] += 2.0 * inv * (P[i] - targets[i]) * dY[0];
        },
        t.needs_grad(pred), "mse");
}

/// sum_k x_k^2 as a scalar.
inline Var sum_squares(Var x) {
    Tape& t = *x.tape;
    double s = 0.0;
    for (double v : t.value(x).data()) s += v * v;
    return t.push(
        Tensor::vector(1, s),
        [x](Tape& t, const Tensor& dY) {
            if (!t.needs_grad(x)) return;
            const Tensor& X = t.value(x);
            Tensor& dX = t.grad(x);
            for (std::size_t k = 0; k < X.size(); ++k) dX[k] += 2.0 * X[k] * dY[0];
        },
        t.needs_grad(x), "sum_squares");
}

/// a + c * b for scalars a and b.
inline Var add_scaled(Var a, Var b, double c) {
    Tape& t = *a.tape;
    const double y = t.value(a)[0] + c * t.value(b)[0];
    return t.push(
        Tensor::vector(1, y),
        [a, b, c](Tape& t, const Tensor& dY) {
            if (t.needs_grad(a)) t.grad(a)[0] += dY[0];
            if (t.needs_grad(b)) t.grad(b)[0] += c * dY[0];
        },
        t.needs_grad(a) || t.needs_grad(b), "add_scaled");
}

/// Regularized objective: MSE(preds, targets) + lambda * sum ||W||_F^2 over
/// the weight matrices of `params` (biases excluded).
inline Var mse_plus_l2(Var preds, std::vector<double> targets, ParamStore& params, double lambda,
                       const std::vector<Var>* param_vars = nullptr) {
    Tape& t = *preds.tape;
    Var loss = mse(preds, std::move(targets));
    if (lambda == 0.0) {
        return loss;
    }
    std::size_t idx = 0;
    for (auto& p : params.all()) {
        const Var pv = param_vars != nullptr ? (*param_vars)[idx] : t.param(p);
        ++idx;
        if (p.is_weight) {
            loss = add_scaled(loss, sum_squares(pv), lambda);
        }
    }
    return loss;
}

}  // namespace condest::nn
