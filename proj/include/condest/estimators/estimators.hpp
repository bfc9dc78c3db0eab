#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "condest/error.hpp"
#include "condest/rng.hpp"
#include "condest/sparse/csr.hpp"
#include "condest/sparse/dense.hpp"

namespace condest {

struct EstimatorResult {
    double kappa_hat = 0.0;
    int iterations = 0;
    bool converged = false;
    double t_factor = 0.0;  // seconds
    double t_iter = 0.0;    // seconds

    double total() const { return t_factor + t_iter; }
};

/// Hager's estimate of ||A^{-1}||_1 from LU factors of A. Always a lower
/// bound: every value it returns is ||A^{-1} x||_1 for some ||x||_1 = 1.
/// `iterations` (optional) receives the number of solve pairs performed.
inline double onenormest_inverse(const LuFactors& f, Index n, int max_iter = 5, int* iterations = nullptr,
                                 bool* converged = nullptr) {
    if (n != f.n() || n <= 0) {
        throw DimensionError("onenormest_inverse: dimension does not match factors");
    }
    if (max_iter < 1) {
        throw InvalidArgument("onenormest_inverse: max_iter must be >= 1");
    }
    const auto un = static_cast<std::size_t>(n);
    std::vector<double> x(un, 1.0 / static_cast<double>(n));
    std::vector<double> xi(un);
    double best = 0.0;
    bool done = false;
    int it = 0;
    while (it < max_iter) {
        ++it;
        const auto y = lu_solve(f, x);
        double est = 0.0;
        for (std::size_t i = 0; i < un; ++i) {
            est += std::abs(y[i]);
            xi[i] = y[i] >= 0.0 ? 1.0 : -1.0;
        }
        best = std::max(best, est);
        const auto z = lu_solve(f, xi, true);
        double ztx = 0.0;
        std::size_t j = 0;
        for (std::size_t i = 0; i < un; ++i) {
            ztx += z[i] * x[i];
            if (std::abs(z[i]) > std::abs(z[j])) j = i;
        }
        if (std::abs(z[j]) <= ztx) {
            done = true;
            break;
        }
        std::fill(x.begin(), x.end(), 0.0);
        x[j] = 1.0;
    }
    if (iterations != nullptr) *iterations = it;
    if (converged != nullptr) *converged = done;
    return best;
}

/// kappa_1 estimate ||A||_1 * est(||A^{-1}||_1) with a single factorization.
inline EstimatorResult cond1_hager_higham(const CsrMatrix& a, int max_iter = 5) {
    using clock = std::chrono::steady_clock;
    if (a.n() == 0) {
        throw InvalidArgument("cond1_hager_higham: empty matrix");
    }
    EstimatorResult r;
    const auto t0 = clock::now();
    const LuFactors f = dense_lu_factor(to_dense(a));
    const auto t1 = clock::now();
    bool conv = false;
    const double inv = onenormest_inverse(f, a.n(), max_iter, &r.iterations, &conv);
    r.kappa_hat = norm_1(a) * inv;
    const auto t2 = clock::now();
    // Hitting the cap still yields a valid lower bound.
    r.converged = std::isfinite(r.kappa_hat) && r.kappa_hat > 0.0;
    r.t_factor = std::chrono::duration<double>(t1 - t0).count();
    r.t_iter = std::chrono::duration<double>(t2 - t1).count();
    return r;
}

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

/// Modified Gram-Schmidt against every vector of `basis`.
inline void mgs(std::vector<double>& w, const std::vector<std::vector<double>>& basis) {
    for (const auto& q : basis) {
        const double c = dot(w, q);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= c * q[i];
    }
}

}  // namespace detail

/// Extreme singular values of an upper bidiagonal matrix (diag alpha, super
/// beta) from the eigenvalues of its Jordan-Wielandt form [[0, B], [B^T, 0]],
/// which are exactly +-sigma_i.
inline SingularExtremes bidiagonal_extremes(const std::vector<double>& alpha, const std::vector<double>& beta) {
    const auto k = static_cast<Index>(alpha.size());
    DenseMatrix jw(2 * k, 2 * k);
    for (Index i = 0; i < k; ++i) {
        jw(i, k + i) = alpha[i];
        jw(k + i, i) = alpha[i];
        if (i + 1 < k) {
            jw(i, k + i + 1) = beta[i];
            jw(k + i + 1, i) = beta[i];
        }
    }
    const auto spec = jacobi_eigen_sym(std::move(jw));
    SingularExtremes s{0.0, std::numeric_limits<double>::infinity()};
    // Eigenvalues come in +-sigma pairs; the k largest are the singular values.
    for (Index i = k; i < 2 * k; ++i) {
        const double sigma = std::abs(spec.eigenvalues[i]);
        s.sigma_max = std::max(s.sigma_max, sigma);
        s.sigma_min = std::min(s.sigma_min, sigma);
    }
    return s;
}

/// kappa_2 estimate from k steps of Golub-Kahan bidiagonalization with full
/// MGS reorthogonalization of both Krylov bases. `ritz` (optional) receives
/// the extreme Ritz singular values.
inline EstimatorResult golub_kahan_cond2(const CsrMatrix& a, int k, std::uint64_t seed,
                                         SingularExtremes* ritz = nullptr) {
    using clock = std::chrono::steady_clock;
    const Index n = a.n();
    if (k < 2 || k > n) {
        throw InvalidArgument("golub_kahan_cond2: need 2 <= k <= n (k = " + std::to_string(k) + ", n = " +
                              std::to_string(n) + ")");
    }
    const auto t0 = clock::now();
    const auto un = static_cast<std::size_t>(n);
    CounterRng rng(hash_words({seed, 0x676B6C616EULL}));
    std::vector<double> v(un);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    const double v0 = detail::norm2(v);
    for (auto& x : v) x /= v0;

    std::vector<std::vector<double>> V, U;
    std::vector<double> alpha, beta;
    double scale = 0.0;

    std::vector<double> u = matvec(a, v);
    V.push_back(v);
    for (int j = 0;; ++j) {
        detail::mgs(u, U);
        const double al = detail::norm2(u);
        alpha.push_back(al);
        scale = std::max(scale, al);
        if (al <= 1e-14 * scale || al == 0.0) {
            // A maps the current Krylov space into span(U): B is singular.
            alpha.back() = 0.0;
            break;
        }
        for (auto& x : u) x /= al;
        U.push_back(u);
        if (j + 1 == k) break;

        std::vector<double> w = matvec_t(a, u);
        for (std::size_t i = 0; i < un; ++i) w[i] -= al * V.back()[i];
        detail::mgs(w, V);
        const double be = detail::norm2(w);
        if (be <= 1e-14 * scale) {
            break;
        }
        beta.push_back(be);
        scale = std::max(scale, be);
        for (auto& x : w) x /= be;
        V.push_back(w);
        u = matvec(a, w);
        for (std::size_t i = 0; i < un; ++i) u[i] -= be * U.back()[i];
    }

    EstimatorResult r;
    r.iterations = static_cast<int>(alpha.size());
    const auto s = bidiagonal_extremes(alpha, beta);
    if (ritz != nullptr) *ritz = s;
    if (!(s.sigma_min >= 1e-300)) {
        r.kappa_hat = std::numeric_limits<double>::infinity();
        r.converged = false;
    } else {
        r.kappa_hat = s.sigma_max / s.sigma_min;
        r.converged = true;
    }
    r.t_iter = std::chrono::duration<double>(clock::now() - t0).count();
    return r;
}

}  // namespace condest
