#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "condest/error.hpp"
#include "condest/sparse/csr.hpp"

namespace condest {

/// Row-major dense matrix used for the exact oracles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(Index rows, Index cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {}

    Index rows() const noexcept { return rows_; }
    Index cols() const noexcept { return cols_; }

    double& operator()(Index i, Index j) noexcept { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
    double operator()(Index i, Index j) const noexcept { return data_[static_cast<std::size_t>(i * cols_ + j)]; }

    std::span<double> row(Index i) noexcept { return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const double> row(Index i) const noexcept {
        return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)};
    }

    std::span<const double> data() const noexcept { return data_; }

private:
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<double> data_;
};

inline DenseMatrix to_dense(const CsrMatrix& a) {
    DenseMatrix d(a.n(), a.n());
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (Index i = 0; i < a.n(); ++i) {
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            d(i, ci[k]) = v[k];
        }
    }
    return d;
}

/// A^T A, exploiting sparsity of A.
inline DenseMatrix gram(const CsrMatrix& a) {
    const Index n = a.n();
    DenseMatrix g(n, n);
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    // (A^T A)_{jl} = sum_i a_ij a_il
    for (Index i = 0; i < n; ++i) {
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            auto grow = g.row(ci[k]);
            for (Index m = rp[i]; m < rp[i + 1]; ++m) {
                grow[ci[m]] += v[k] * v[m];
            }
        }
    }
    return g;
}

/// Below this magnitude a pivot is treated as exactly zero.
inline constexpr double kSingularPivot = 1e-300;

/// Packed LU factors of P A = L U (unit lower L stored below the diagonal).
struct LuFactors {
    DenseMatrix lu;
    /// Row i of P A is row perm[i] of A.
    std::vector<Index> perm;
    int perm_sign = 1;

    Index n() const noexcept { return lu.rows(); }
};

/// Gaussian elimination with partial pivoting. Throws SingularMatrix when a
/// pivot falls below kSingularPivot.
inline LuFactors dense_lu_factor(DenseMatrix a) {
    if (a.rows() != a.cols()) {
        throw DimensionError("dense_lu_factor: matrix is not square");
    }
    const Index n = a.rows();
    LuFactors f;
    f.perm.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        f.perm[i] = i;
    }
    for (Index k = 0; k < n; ++k) {
        Index p = k;
        double best = std::abs(a(k, k));
        for (Index i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > best) {
                best = std::abs(a(i, k));
                p = i;
            }
        }
        if (!(best >= kSingularPivot)) {
            throw SingularMatrix("dense_lu_factor: zero pivot in column " + std::to_string(k));
        }
        if (p != k) {
            std::swap_ranges(a.row(k).begin(), a.row(k).end(), a.row(p).begin());
            std::swap(f.perm[k], f.perm[p]);
            f.perm_sign = -f.perm_sign;
        }
        const double pivot = a(k, k);
        const auto pivot_row = a.row(k);
        for (Index i = k + 1; i < n; ++i) {
            const double l = a(i, k) / pivot;
            a(i, k) = l;
            if (l == 0.0) {
                continue;
            }
            auto r = a.row(i);
            for (Index j = k + 1; j < n; ++j) {
                r[j] -= l * pivot_row[j];
            }
        }
    }
    f.lu = std::move(a);
    return f;
}

/// Solves A x = b, or A^T x = b when `transpose` is set.
inline std::vector<double> lu_solve(const LuFactors& f, std::span<const double> b, bool transpose = false) {
    const Index n = f.n();
    if (static_cast<Index>(b.size()) != n) {
        throw DimensionError("lu_solve: right-hand side length mismatch");
    }
    const DenseMatrix& lu = f.lu;
    std::vector<double> x(static_cast<std::size_t>(n));
    if (!transpose) {
        for (Index i = 0; i < n; ++i) {
            x[i] = b[f.perm[i]];
        }
        for (Index i = 0; i < n; ++i) {
            const auto r = lu.row(i);
            double s = x[i];
            for (Index j = 0; j < i; ++j) {
                s -= r[j] * x[j];
            }
            x[i] = s;
        }
        for (Index i = n - 1; i >= 0; --i) {
            const auto r = lu.row(i);
            double s = x[i];
            for (Index j = i + 1; j < n; ++j) {
                s -= r[j] * x[j];
            }
            x[i] = s / r[i];
        }
        return x;
    }
    // A^T = U^T L^T P: forward with U^T, backward with L^T, then undo P.
    std::vector<double> w(b.begin(), b.end());
    for (Index i = 0; i < n; ++i) {
        w[i] /= lu(i, i);
        const double wi = w[i];
        const auto r = lu.row(i);
        for (Index j = i + 1; j < n; ++j) {
            w[j] -= r[j] * wi;
        }
    }
    for (Index i = n - 1; i >= 0; --i) {
        const double wi = w[i];
        const auto r = lu.row(i);
        for (Index j = 0; j < i; ++j) {
            w[j] -= r[j] * wi;
        }
    }
    for (Index i = 0; i < n; ++i) {
        x[f.perm[i]] = w[i];
    }
    return x;
}

inline double determinant(const LuFactors& f) {
    double det = f.perm_sign;
    for (Index i = 0; i < f.n(); ++i) {
        det *= f.lu(i, i);
    }
    return det;
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
struct SpectrumResult {
    std::vector<double> eigenvalues;
    int sweeps = 0;
};

/// Cyclic Jacobi eigenvalue iteration for symmetric matrices.
///
/// A rotation is applied whenever |m_pq| > tol * sqrt(|m_pp m_qq|). This
/// relative test (rather than one against ||M||_F) keeps small eigenvalues
/// of graded positive definite matrices accurate to high relative precision.
/// On exit the off-diagonal Frobenius norm is below 1e-12 ||M||_F.
inline SpectrumResult jacobi_eigen_sym(DenseMatrix m) {
    if (m.rows() != m.cols()) {
        throw DimensionError("jacobi_eigen_sym: matrix is not square");
    }
    const Index n = m.rows();
    double scale = 0.0;
    for (double x : m.data()) {
        scale = std::max(scale, std::abs(x));
    }
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale) {
                throw InvalidArgument("jacobi_eigen_sym: input is not symmetric");
            }
        }
    }

    constexpr double tol = 1e-15;
    constexpr int max_sweeps = 80;
    SpectrumResult result;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double app = m(p, p);
                const double aqq = m(q, q);
                if (std::abs(apq) <= tol * std::sqrt(std::abs(app * aqq))) {
                    m(p, q) = 0.0;
                    m(q, p) = 0.0;
                    continue;
                }
                rotated = true;
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                m(p, p) = app - t * apq;
                m(q, q) = aqq + t * apq;
                m(p, q) = 0.0;
                m(q, p) = 0.0;
                auto rp = m.row(p);
                auto rq = m.row(q);
                for (Index r = 0; r < n; ++r) {
                    if (r == p || r == q) {
                        continue;
                    }
                    const double mrp = rp[r];
                    const double mrq = rq[r];
                    rp[r] = c * mrp - s * mrq;
                    rq[r] = s * mrp + c * mrq;
                }
                for (Index r = 0; r < n; ++r) {
                    if (r == p || r == q) {
                        continue;
                    }
                    m(r, p) = rp[r];
                    m(r, q) = rq[r];
                }
            }
        }
        result.sweeps = sweep + 1;
        if (!rotated) {
            break;
        }
        if (sweep + 1 == max_sweeps) {
            throw NumericalError("jacobi_eigen_sym: no convergence after " + std::to_string(max_sweeps) + " sweeps");
        }
    }
    result.eigenvalues.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        result.eigenvalues[i] = m(i, i);
    }
    std::sort(result.eigenvalues.begin(), result.eigenvalues.end());
    return result;
}

/// Eigenvalues of a symmetric matrix via Householder reduction to
/// tridiagonal form followed by implicit QL with Wilkinson shifts.
/// O(n^3) with a small constant; absolute (not relative) accuracy.
inline SpectrumResult tridiagonal_ql_eigen_sym(DenseMatrix m) {
    if (m.rows() != m.cols()) {
        throw DimensionError("tridiagonal_ql_eigen_sym: matrix is not square");
    }
    const Index n = m.rows();
    std::vector<double> d(static_cast<std::size_t>(n), 0.0), e(static_cast<std::size_t>(n), 0.0);
    std::vector<double> v(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (Index k = 0; k + 2 < n; ++k) {
        double xnorm = 0.0;
        for (Index i = k + 1; i < n; ++i) xnorm = std::hypot(xnorm, m(i, k));
        d[k] = m(k, k);
        if (xnorm == 0.0) {
            e[k] = 0.0;
            continue;
        }
        const double alpha = m(k + 1, k) > 0 ? -xnorm : xnorm;
        double vn = 0.0;
        for (Index i = k + 1; i < n; ++i) {
            v[i] = m(i, k);
            if (i == k + 1) v[i] -= alpha;
            vn += v[i] * v[i];
        }
        vn = std::sqrt(vn);
        for (Index i = k + 1; i < n; ++i) v[i] /= vn;
        // p = A v, K = v^T p, w = p - K v, A -= 2 (v w^T + w v^T)
        double kk = 0.0;
        for (Index i = k + 1; i < n; ++i) {
            const auto row = m.row(i);
            double s = 0.0;
            for (Index j = k + 1; j < n; ++j) s += row[j] * v[j];
            w[i] = s;
            kk += v[i] * s;
        }
        for (Index i = k + 1; i < n; ++i) w[i] -= kk * v[i];
        for (Index i = k + 1; i < n; ++i) {
            auto row = m.row(i);
            const double vi = 2.0 * v[i];
            const double wi = 2.0 * w[i];
            for (Index j = k + 1; j < n; ++j) row[j] -= vi * w[j] + wi * v[j];
        }
        e[k] = alpha;
    }
    if (n >= 2) {
        d[n - 2] = m(n - 2, n - 2);
        e[n - 2] = m(n - 1, n - 2);
    }
    if (n >= 1) d[n - 1] = m(n - 1, n - 1);

    constexpr int max_iter = 60;
    const double ulp = std::numeric_limits<double>::epsilon();
    SpectrumResult result;
    for (Index l = 0; l < n; ++l) {
        int iter = 0;
        for (;;) {
            Index mm = l;
            for (; mm + 1 < n; ++mm) {
                const double dd = std::abs(d[mm]) + std::abs(d[mm + 1]);
                if (std::abs(e[mm]) <= ulp * dd) break;
            }
            if (mm == l) break;
            if (++iter > max_iter) {
                throw NumericalError("tridiagonal_ql_eigen_sym: no convergence");
            }
            result.sweeps = std::max(result.sweeps, iter);
            double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            double r = std::hypot(g, 1.0);
            g = d[mm] - d[l] + e[l] / (g + std::copysign(r, g));
            double s = 1.0, c = 1.0, p = 0.0;
            bool deflated = false;
            for (Index i = mm - 1; i >= l; --i) {
                const double f = s * e[i];
                const double b = c * e[i];
                r = std::hypot(f, g);
                e[i + 1] = r;
                if (r == 0.0) {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if (deflated) continue;
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    std::sort(d.begin(), d.end());
    result.eigenvalues = std::move(d);
    return result;
}

/// Above this size the symmetric eigensolver switches from Jacobi to
/// Householder + QL.
inline constexpr Index kJacobiMaxN = 512;

inline SpectrumResult symmetric_eigenvalues(DenseMatrix m) {
    if (m.rows() <= kJacobiMaxN) {
        return jacobi_eigen_sym(std::move(m));
    }
    return tridiagonal_ql_eigen_sym(std::move(m));
}

/// Exact ||A^{-1}||_1 from n LU solves against unit vectors.
inline double exact_inverse_norm_1(const LuFactors& f) {
    const Index n = f.n();
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    double best = 0.0;
    for (Index j = 0; j < n; ++j) {
        e[j] = 1.0;
        const auto col = lu_solve(f, e);
        e[j] = 0.0;
        double s = 0.0;
        for (double x : col) {
            s += std::abs(x);
        }
        best = std::max(best, s);
    }
    return best;
}

/// Largest and smallest singular values of A.
struct SingularExtremes {
    double sigma_max = 0.0;
    double sigma_min = 0.0;
};

/// Symmetric inputs use |eigenvalues| of A directly; other inputs use the
/// square roots of the eigenvalues of A^T A.
inline SingularExtremes exact_singular_extremes(const CsrMatrix& a) {
    if (a.n() == 0) {
        throw InvalidArgument("exact_singular_extremes: empty matrix");
    }
    if (is_symmetric(a)) {
        const auto spec = symmetric_eigenvalues(to_dense(a));
        double lo = std::abs(spec.eigenvalues.front());
        double hi = lo;
        for (double l : spec.eigenvalues) {
            lo = std::min(lo, std::abs(l));
            hi = std::max(hi, std::abs(l));
        }
        if (!(lo > 0.0)) {
            throw SingularMatrix("exact_singular_extremes: zero eigenvalue");
        }
        return {hi, lo};
    }
    const auto spec = symmetric_eigenvalues(gram(a));
    const double lmin = spec.eigenvalues.front();
    const double lmax = spec.eigenvalues.back();
    if (!(lmin > 0.0)) {
        throw SingularMatrix("exact_singular_extremes: A^T A has nonpositive eigenvalue");
    }
    return {std::sqrt(lmax), std::sqrt(lmin)};
}

/// Default cap on the dimension accepted by the dense oracles.
inline constexpr Index kDefaultExactCap = 4000;

/// kappa_p(A) = ||A||_p ||A^{-1}||_p for p in {1, 2}, computed densely.
inline double exact_cond(const CsrMatrix& a, int norm, Index max_n = kDefaultExactCap) {
    if (norm != 1 && norm != 2) {
        throw InvalidArgument("exact_cond: norm must be 1 or 2");
    }
    if (a.n() > max_n) {
        throw InvalidArgument("exact_cond: n = " + std::to_string(a.n()) + " exceeds dense cap " + std::to_string(max_n));
    }
    if (a.n() == 0) {
        throw InvalidArgument("exact_cond: empty matrix");
    }
    if (norm == 1) {
        const auto f = dense_lu_factor(to_dense(a));
        return norm_1(a) * exact_inverse_norm_1(f);
    }
    const auto s = exact_singular_extremes(a);
    return s.sigma_max / s.sigma_min;
}

}  // namespace condest
