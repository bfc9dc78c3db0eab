#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "condest/rng.hpp"
#include "condest/sparse/csr.hpp"

namespace condest {

/// Underflow guard used throughout the feature formulas.
inline constexpr double kFeatureEps = 1e-10;

/// Bumped whenever the layout or definition of FeatureVector changes.
inline constexpr int kFeatureSchemaVersion = 1;

inline constexpr std::size_t kNumGlobalFeatures = 29;

/// Global descriptor, in this order:
///   struc(3) | diag(5) | norm(4) | ddom(4) | rsp(5) | nzval(5) | gers(3)
struct FeatureVector {
    std::array<double, kNumGlobalFeatures> values{};

    double operator[](std::size_t i) const { return values[i]; }

    static constexpr std::size_t kStruc = 0;
    static constexpr std::size_t kDiag = 3;
    static constexpr std::size_t kNorm = 8;
    static constexpr std::size_t kDdom = 12;
    static constexpr std::size_t kRsp = 16;
    static constexpr std::size_t kNzval = 21;
    static constexpr std::size_t kGers = 26;
};

inline const std::array<const char*, kNumGlobalFeatures>& feature_names() {
    static const std::array<const char*, kNumGlobalFeatures> names = {
        "struc_log_n",      "struc_log_nnz",    "struc_density",
        "diag_log_mean",    "diag_log_std",     "diag_log_min",     "diag_log_max",     "diag_log_range",
        "norm_log_1",       "norm_log_inf",     "norm_log_fro",     "norm_log_1_over_inf",
        "ddom_mean",        "ddom_min",         "ddom_max",         "ddom_std",
        "rsp_log_mean",     "rsp_log_std",      "rsp_log_max",      "rsp_log_min_nonempty", "rsp_cv",
        "nzval_log_mean",   "nzval_log_std",    "nzval_log_min",    "nzval_log_max",    "nzval_log_range",
        "gers_log_mean",    "gers_log_max",     "gers_mean_ratio",
    };
    return names;
}

namespace detail {

/// Single-pass mean / population std / min / max (Welford).
struct RunningStats {
    std::int64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();

    void add(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
        min = std::min(min, x);
        max = std::max(max, x);
    }
    double population_std() const { return count > 0 ? std::sqrt(std::max(m2, 0.0) / static_cast<double>(count)) : 0.0; }
    double safe_min() const { return count > 0 ? min : 0.0; }
    double safe_max() const { return count > 0 ? max : 0.0; }
    double safe_mean() const { return count > 0 ? mean : 0.0; }
};

/// log10(max / (min + eps)); a zero numerator (all-zero group) is floored
/// at eps so the feature stays finite.
inline double log_range(double max, double min) {
    return std::log10(std::max(max / (min + kFeatureEps), kFeatureEps));
}

inline double log_eps(double x) { return std::log10(x + kFeatureEps); }

}  // namespace detail

/// Computes the 29 global features in one pass over the nonzeros plus O(n)
/// reductions. If `work` is given it receives the number of elementary
/// visits (nonzeros touched plus per-row and per-column reductions).
inline FeatureVector extract_global_features(const CsrMatrix& a, std::uint64_t* work = nullptr) {
    using detail::log_eps;
    using detail::log_range;
    const Index n = a.n();
    const Index nnz = a.nnz();
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    const double eps = kFeatureEps;

    std::uint64_t visits = 0;
    std::vector<double> colsum(static_cast<std::size_t>(n), 0.0);
    detail::RunningStats diag, ddom, rows, nzval, gers, gers_ratio;
    double fro2 = 0.0;
    double norm_inf = 0.0;
    double min_nonempty_row = 0.0;
    bool any_nonempty = false;

    for (Index i = 0; i < n; ++i) {
        double d = 0.0;
        double off = 0.0;
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            ++visits;
            const double x = std::abs(v[k]);
            colsum[ci[k]] += x;
            fro2 += x * x;
            nzval.add(x);
            if (ci[k] == i) {
                d = x;
            } else {
                off += x;
            }
        }
        ++visits;
        const double r = d + off;
        const auto rho = static_cast<double>(rp[i + 1] - rp[i]);
        norm_inf = std::max(norm_inf, r);
        diag.add(d);
        ddom.add(d / (r + eps));
        rows.add(rho);
        gers.add(off);
        gers_ratio.add(off / (d + eps));
        if (rho > 0) {
            min_nonempty_row = any_nonempty ? std::min(min_nonempty_row, rho) : rho;
            any_nonempty = true;
        }
    }
    double norm1 = 0.0;
    for (double c : colsum) {
        ++visits;
        norm1 = std::max(norm1, c);
    }
    const double fro = std::sqrt(fro2);
    const double nd = static_cast<double>(n);
    const double nnzd = static_cast<double>(nnz);

    FeatureVector f;
    auto& o = f.values;
    o[0] = std::log10(nd + 1.0);
    o[1] = std::log10(nnzd + 1.0);
    o[2] = n > 0 ? nnzd / (nd * nd) : 0.0;

    o[3] = log_eps(diag.safe_mean());
    o[4] = log_eps(diag.population_std());
    o[5] = log_eps(diag.safe_min());
    o[6] = log_eps(diag.safe_max());
    o[7] = log_range(diag.safe_max(), diag.safe_min());

    o[8] = log_eps(norm1);
    o[9] = log_eps(norm_inf);
    o[10] = log_eps(fro);
    o[11] = log_range(norm1, norm_inf);

    o[12] = ddom.safe_mean();
    o[13] = ddom.safe_min();
    o[14] = ddom.safe_max();
    o[15] = ddom.population_std();

    o[16] = std::log10(rows.safe_mean() + 1.0);
    o[17] = std::log10(rows.population_std() + 1.0);
    o[18] = std::log10(rows.safe_max() + 1.0);
    o[19] = std::log10(min_nonempty_row + 1.0);
    o[20] = rows.population_std() / (rows.safe_mean() + 1.0);

    o[21] = log_eps(nzval.safe_mean());
    o[22] = log_eps(nzval.population_std());
    o[23] = log_eps(nzval.safe_min());
    o[24] = log_eps(nzval.safe_max());
    o[25] = log_range(nzval.safe_max(), nzval.safe_min());

    o[26] = log_eps(gers.safe_mean());
    o[27] = log_eps(gers.safe_max());
    o[28] = gers_ratio.safe_mean();

    if (work != nullptr) {
        *work = visits;
    }
    return f;
}

/// sigma_max(A) by power iteration on A^T A. Stops when the estimate changes
/// by less than `rel_tol` relative, or after `max_iter` products.
inline double power_norm_2(const CsrMatrix& a, double rel_tol = 1e-6, int max_iter = 200) {
    const Index n = a.n();
    if (n == 0 || a.nnz() == 0) {
        return 0.0;
    }
    // Fixed pseudo-random start; a constant vector can be orthogonal to the
    // dominant singular vector of grid operators.
    CounterRng rng(0x6E6F726D32ULL);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& xi : x) {
        xi = rng.uniform(-1.0, 1.0);
    }
    auto normalize = [](std::vector<double>& y) {
        double s = 0.0;
        for (double t : y) s += t * t;
        s = std::sqrt(s);
        if (s > 0.0) {
            for (double& t : y) t /= s;
        }
        return s;
    };
    normalize(x);
    double sigma = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        auto y = matvec(a, x);
        auto z = matvec_t(a, y);
        const double lambda = normalize(z);  // ||A^T A x|| with ||x|| = 1
        const double next = std::sqrt(lambda);
        x = std::move(z);
        if (lambda == 0.0) {
            return 0.0;
        }
        if (it > 0 && std::abs(next - sigma) <= rel_tol * next) {
            return next;
        }
        sigma = next;
    }
    return sigma;
}

/// Attributed graph of a sparse matrix: one node per row, one directed edge
/// (i, j) per stored nonzero a_ij (self loops included when a_ii != 0).
struct MatrixGraph {
    Index n = 0;
    /// Edge list in CSR form: edges of node i are col_idx[row_ptr[i] .. row_ptr[i+1]).
    std::vector<Index> row_ptr;
    std::vector<Index> col_idx;
    /// n x 2 row-major: (log10(|a_ii| + eps), log10(rho_i + 1)).
    std::vector<double> node_features;
    /// log10(|a_ij| + eps) per edge. Stored for analysis; not used in message passing.
    std::vector<double> edge_features;
    FeatureVector global;
    double norm1 = 0.0;
    std::optional<double> norm2;

    Index num_edges() const noexcept { return static_cast<Index>(col_idx.size()); }
    Index degree(Index i) const noexcept { return row_ptr[i + 1] - row_ptr[i]; }
};

inline constexpr std::size_t kNodeFeatureDim = 2;

/// Graph structure, node/edge features and global features, without the
/// norm metadata.
inline MatrixGraph build_graph_features(const CsrMatrix& a) {
    MatrixGraph g;
    g.n = a.n();
    g.row_ptr.assign(a.row_ptr().begin(), a.row_ptr().end());
    g.col_idx.assign(a.col_idx().begin(), a.col_idx().end());
    g.node_features.resize(static_cast<std::size_t>(g.n) * kNodeFeatureDim);
    g.edge_features.resize(static_cast<std::size_t>(a.nnz()));
    const auto v = a.values();
    for (Index i = 0; i < g.n; ++i) {
        double d = 0.0;
        for (Index k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
            g.edge_features[k] = std::log10(std::abs(v[k]) + kFeatureEps);
            if (g.col_idx[k] == i) {
                d = std::abs(v[k]);
            }
        }
        g.node_features[2 * i] = std::log10(d + kFeatureEps);
        g.node_features[2 * i + 1] = std::log10(static_cast<double>(g.degree(i)) + 1.0);
    }
    g.global = extract_global_features(a);
    return g;
}

/// Full attributed graph. The exact 1-norm is always attached; the 2-norm is
/// attached on request (power iteration).
inline MatrixGraph build_graph(const CsrMatrix& a, bool want_norm2 = false) {
    MatrixGraph g = build_graph_features(a);
    g.norm1 = norm_1(a);
    if (want_norm2) {
        g.norm2 = power_norm_2(a);
    }
    return g;
}

/// CSV with a header row: id followed by the 29 named features.
inline void write_features_csv_header(std::ostream& out) {
    out << "id";
    for (const char* name : feature_names()) {
        out << ',' << name;
    }
    out << '\n';
}

inline void write_features_csv_row(std::ostream& out, const std::string& id, const FeatureVector& f) {
    out << id;
    char buf[64];
    for (double x : f.values) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        out << ',' << buf;
    }
    out << '\n';
}

}  // namespace condest
