#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "condest/error.hpp"

namespace condest {

using Index = std::int64_t;

/// One (row, col, value) entry for assembly.
struct Triplet {
    Index row;
    Index col;
    double value;
};

/// Square compressed sparse row matrix.
///
/// Immutable after construction. Invariants: row_ptr is nondecreasing with
/// row_ptr[0] = 0 and row_ptr[n] = nnz; column indices are strictly
/// increasing within each row and lie in [0, n); no explicit zeros are stored.
class CsrMatrix {
public:
    CsrMatrix() : row_ptr_{0} {}

    /// Takes ownership of validated CSR arrays. Throws InvalidArgument when
    /// any invariant is violated.
    CsrMatrix(Index n, std::vector<Index> row_ptr, std::vector<Index> col_idx, std::vector<double> values)
        : n_(n), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)), values_(std::move(values)) {
        validate();
    }

    Index n() const noexcept { return n_; }
    Index nnz() const noexcept { return static_cast<Index>(values_.size()); }

    std::span<const Index> row_ptr() const noexcept { return row_ptr_; }
    std::span<const Index> col_idx() const noexcept { return col_idx_; }
    std::span<const double> values() const noexcept { return values_; }

    Index row_nnz(Index i) const noexcept { return row_ptr_[i + 1] - row_ptr_[i]; }

    /// Entry lookup by binary search within the row; 0 if not stored.
    double at(Index i, Index j) const {
        const auto first = col_idx_.begin() + row_ptr_[i];
        const auto last = col_idx_.begin() + row_ptr_[i + 1];
        const auto it = std::lower_bound(first, last, j);
        if (it != last && *it == j) {
            return values_[static_cast<std::size_t>(it - col_idx_.begin())];
        }
        return 0.0;
    }

    /// Diagonal with structural zeros reported as 0.
    std::vector<double> diagonal() const {
        std::vector<double> d(static_cast<std::size_t>(n_), 0.0);
        for (Index i = 0; i < n_; ++i) {
            d[i] = at(i, i);
        }
        return d;
    }

    friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

private:
    void validate() const {
        if (n_ < 0) {
            throw InvalidArgument("CsrMatrix: negative dimension");
        }
        if (row_ptr_.size() != static_cast<std::size_t>(n_) + 1 || row_ptr_.front() != 0 ||
            row_ptr_.back() != static_cast<Index>(col_idx_.size()) || col_idx_.size() != values_.size()) {
            throw InvalidArgument("CsrMatrix: inconsistent array lengths");
        }
        for (Index i = 0; i < n_; ++i) {
            if (row_ptr_[i + 1] < row_ptr_[i]) {
                throw InvalidArgument("CsrMatrix: row_ptr must be nondecreasing");
            }
            for (Index k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                if (col_idx_[k] < 0 || col_idx_[k] >= n_) {
                    throw InvalidArgument("CsrMatrix: column index out of range");
                }
                if (k > row_ptr_[i] && col_idx_[k] <= col_idx_[k - 1]) {
                    throw InvalidArgument("CsrMatrix: column indices must be strictly increasing");
                }
                if (values_[k] == 0.0) {
                    throw InvalidArgument("CsrMatrix: explicit zero stored");
                }
            }
        }
    }

    Index n_ = 0;
    std::vector<Index> row_ptr_;
    std::vector<Index> col_idx_;
    std::vector<double> values_;
};

/// Assembles a CSR matrix from unordered triplets. Duplicates are summed and
/// entries that cancel to exactly zero are dropped.
inline CsrMatrix csr_from_triplets(Index n, std::span<const Triplet> triplets) {
    if (n < 0) {
        throw InvalidArgument("csr_from_triplets: negative dimension");
    }
    for (const auto& t : triplets) {
        if (t.row < 0 || t.row >= n || t.col < 0 || t.col >= n) {
            throw InvalidArgument("csr_from_triplets: index (" + std::to_string(t.row) + ", " +
                                  std::to_string(t.col) + ") out of range for n = " + std::to_string(n));
        }
    }
    std::vector<Triplet> sorted(triplets.begin(), triplets.end());
    // Stable so that duplicate summation order follows input order.
    std::stable_sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    std::vector<Index> row_ptr(static_cast<std::size_t>(n) + 1, 0);
    std::vector<Index> col_idx;
    std::vector<double> values;
    col_idx.reserve(sorted.size());
    values.reserve(sorted.size());
    for (std::size_t k = 0; k < sorted.size();) {
        const Index r = sorted[k].row;
        const Index c = sorted[k].col;
        double sum = 0.0;
        while (k < sorted.size() && sorted[k].row == r && sorted[k].col == c) {
            sum += sorted[k].value;
            ++k;
        }
        if (sum != 0.0) {
            col_idx.push_back(c);
            values.push_back(sum);
            ++row_ptr[r + 1];
        }
    }
    std::partial_sum(row_ptr.begin(), row_ptr.end(), row_ptr.begin());
    return CsrMatrix(n, std::move(row_ptr), std::move(col_idx), std::move(values));
}

inline CsrMatrix csr_from_triplets(Index n, const std::vector<Triplet>& triplets) {
    return csr_from_triplets(n, std::span<const Triplet>(triplets));
}

inline CsrMatrix identity(Index n) {
    std::vector<Index> row_ptr(static_cast<std::size_t>(n) + 1);
    std::vector<Index> col_idx(static_cast<std::size_t>(n));
    std::iota(row_ptr.begin(), row_ptr.end(), Index{0});
    std::iota(col_idx.begin(), col_idx.end(), Index{0});
    return CsrMatrix(n, std::move(row_ptr), std::move(col_idx), std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

/// y = A x
inline std::vector<double> matvec(const CsrMatrix& a, std::span<const double> x) {
    if (static_cast<Index>(x.size()) != a.n()) {
        throw DimensionError("matvec: vector length " + std::to_string(x.size()) + " != n = " + std::to_string(a.n()));
    }
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    std::vector<double> y(x.size(), 0.0);
    for (Index i = 0; i < a.n(); ++i) {
        double s = 0.0;
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            s += v[k] * x[ci[k]];
        }
        y[i] = s;
    }
    return y;
}

/// y = A^T x
inline std::vector<double> matvec_t(const CsrMatrix& a, std::span<const double> x) {
    if (static_cast<Index>(x.size()) != a.n()) {
        throw DimensionError("matvec_t: vector length " + std::to_string(x.size()) + " != n = " + std::to_string(a.n()));
    }
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    std::vector<double> y(x.size(), 0.0);
    for (Index i = 0; i < a.n(); ++i) {
        const double xi = x[i];
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            y[ci[k]] += v[k] * xi;
        }
    }
    return y;
}

/// Max absolute column sum, one pass with a column accumulator.
inline double norm_1(const CsrMatrix& a) {
    std::vector<double> colsum(static_cast<std::size_t>(a.n()), 0.0);
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
        colsum[ci[k]] += std::abs(v[k]);
    }
    return colsum.empty() ? 0.0 : *std::max_element(colsum.begin(), colsum.end());
}

/// Max absolute row sum.
inline double norm_inf(const CsrMatrix& a) {
    const auto rp = a.row_ptr();
    const auto v = a.values();
    double best = 0.0;
    for (Index i = 0; i < a.n(); ++i) {
        double s = 0.0;
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            s += std::abs(v[k]);
        }
        best = std::max(best, s);
    }
    return best;
}

inline double norm_fro(const CsrMatrix& a) {
    double s = 0.0;
    for (double x : a.values()) {
        s += x * x;
    }
    return std::sqrt(s);
}

inline CsrMatrix transpose(const CsrMatrix& a) {
    const Index n = a.n();
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    std::vector<Index> row_ptr(static_cast<std::size_t>(n) + 1, 0);
    for (Index c : ci) {
        ++row_ptr[c + 1];
    }
    std::partial_sum(row_ptr.begin(), row_ptr.end(), row_ptr.begin());
    std::vector<Index> next(row_ptr.begin(), row_ptr.end() - 1);
    std::vector<Index> col_idx(ci.size());
    std::vector<double> values(v.size());
    for (Index i = 0; i < n; ++i) {
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            const Index dst = next[ci[k]]++;
            col_idx[dst] = i;
            values[dst] = v[k];
        }
    }
    return CsrMatrix(n, std::move(row_ptr), std::move(col_idx), std::move(values));
}

/// Exact structural and numerical symmetry.
inline bool is_symmetric(const CsrMatrix& a) { return transpose(a) == a; }

/// c * A. c must be nonzero so that no stored entry vanishes.
inline CsrMatrix scaled(const CsrMatrix& a, double c) {
    if (c == 0.0) {
        throw InvalidArgument("scaled: zero factor");
    }
    std::vector<double> values(a.values().begin(), a.values().end());
    for (double& x : values) {
        x *= c;
    }
    return CsrMatrix(a.n(), {a.row_ptr().begin(), a.row_ptr().end()}, {a.col_idx().begin(), a.col_idx().end()},
                     std::move(values));
}

/// P A P^T where perm[i] is the new position of row/column i.
inline CsrMatrix permuted(const CsrMatrix& a, std::span<const Index> perm) {
    if (static_cast<Index>(perm.size()) != a.n()) {
        throw DimensionError("permuted: permutation length mismatch");
    }
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.nnz()));
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (Index i = 0; i < a.n(); ++i) {
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            t.push_back({perm[i], perm[ci[k]], v[k]});
        }
    }
    return csr_from_triplets(a.n(), t);
}

/// D_left A D_right for diagonal scalings given as vectors.
inline CsrMatrix diag_scaled(const CsrMatrix& a, std::span<const double> left, std::span<const double> right) {
    if (static_cast<Index>(left.size()) != a.n() || static_cast<Index>(right.size()) != a.n()) {
        throw DimensionError("diag_scaled: scaling length mismatch");
    }
    std::vector<double> values(a.values().begin(), a.values().end());
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    for (Index i = 0; i < a.n(); ++i) {
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            values[k] *= left[i] * right[ci[k]];
            if (values[k] == 0.0) {
                throw NumericalError("diag_scaled: entry underflowed to zero");
            }
        }
    }
    return CsrMatrix(a.n(), {rp.begin(), rp.end()}, {ci.begin(), ci.end()}, std::move(values));
}

}  // namespace condest
