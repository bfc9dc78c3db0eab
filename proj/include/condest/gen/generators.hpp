#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "condest/error.hpp"
#include "condest/rng.hpp"
#include "condest/sparse/csr.hpp"

namespace condest {

// Test-matrix families. Grid generators number unknowns row-major on an
// m x m interior grid (node (r, c) -> r * m + c) with homogeneous Dirichlet
// boundaries, so there are no couplings across grid-row boundaries.

namespace detail {

template <class Coupling>
CsrMatrix grid_stencil(Index m, double diagonal, Coupling coupling) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(5 * m * m));
    for (Index r = 0; r < m; ++r) {
        for (Index c = 0; c < m; ++c) {
            const Index i = r * m + c;
            if (r > 0) t.push_back({i, i - m, coupling(0, -1)});
            if (c > 0) t.push_back({i, i - 1, coupling(-1, 0)});
            t.push_back({i, i, diagonal});
            if (c + 1 < m) t.push_back({i, i + 1, coupling(1, 0)});
            if (r + 1 < m) t.push_back({i, i + m, coupling(0, 1)});
        }
    }
    return csr_from_triplets(m * m, t);
}

inline void require(bool ok, const char* what) {
    if (!ok) {
        throw InvalidArgument(what);
    }
}

}  // namespace detail

/// 5-point Laplacian: 4 on the diagonal, -1 for each grid neighbour.
inline CsrMatrix gen_poisson_2d(Index m) {
    detail::require(m >= 2, "gen_poisson_2d: m must be >= 2");
    return detail::grid_stencil(m, 4.0, [](int, int) { return -1.0; });
}

/// 5-point stencil for -div(diag(eps, 1) grad u): x-couplings -eps,
/// y-couplings -1, diagonal 2 eps + 2.
inline CsrMatrix gen_anisotropic(Index m, double eps) {
    detail::require(m >= 2, "gen_anisotropic: m must be >= 2");
    detail::require(eps > 0.0 && eps <= 1.0, "gen_anisotropic: eps must lie in (0, 1]");
    return detail::grid_stencil(m, 2.0 * eps + 2.0, [eps](int dx, int) { return dx != 0 ? -eps : -1.0; });
}

/// S A0 S with A0 the Poisson matrix and S = diag(sqrt(k_i)), k_i drawn
/// log-uniformly on [1, 10^c]. Scaling is computed from the exponent so c = 0
/// gives S = I exactly.
inline CsrMatrix gen_high_contrast(Index m, double c, CounterRng& rng) {
    detail::require(m >= 2, "gen_high_contrast: m must be >= 2");
    detail::require(c >= 0.0, "gen_high_contrast: c must be >= 0");
    const Index n = m * m;
    std::vector<double> s(static_cast<std::size_t>(n));
    for (auto& si : s) {
        si = std::pow(10.0, 0.5 * c * rng.uniform());
    }
    return diag_scaled(gen_poisson_2d(m), s, s);
}

/// Output of the random SPD recipe, keeping the intermediate diagonally
/// dominant D so callers can check the construction.
struct RandomSpdParts {
    CsrMatrix dominant;  // D = C + diag(1.5 r + 1)
    std::vector<double> scaling;
    CsrMatrix matrix;  // S D S
};

inline RandomSpdParts gen_random_spd_parts(Index n, double density, double tau, CounterRng& rng) {
    detail::require(n >= 2, "gen_random_spd: n must be >= 2");
    detail::require(density > 0.0 && density <= 1.0, "gen_random_spd: density must lie in (0, 1]");
    detail::require(tau >= 0.0, "gen_random_spd: tau must be >= 0");

    // 1. sparse B with uniform [0, 1) entries; 2. C = (B + B^T) / 2.
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(2.0 * density * static_cast<double>(n * n)) + 16);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (rng.uniform() < density) {
                const double b = rng.uniform();
                t.push_back({i, j, 0.5 * b});
                t.push_back({j, i, 0.5 * b});
            }
        }
    }
    // 3. r_i = sum_j |c_ij|, D = C + diag(1.5 r + 1).
    const CsrMatrix c = csr_from_triplets(n, t);
    std::vector<double> r(static_cast<std::size_t>(n), 0.0);
    {
        const auto rp = c.row_ptr();
        const auto v = c.values();
        for (Index i = 0; i < n; ++i) {
            for (Index k = rp[i]; k < rp[i + 1]; ++k) {
                r[i] += std::abs(v[k]);
            }
        }
    }
    for (Index i = 0; i < n; ++i) {
        t.push_back({i, i, 1.5 * r[i] + 1.0});
    }
    CsrMatrix d = csr_from_triplets(n, t);

    // 4. s_i log-spaced on [1, sqrt(10^tau)], randomly permuted.
    std::vector<double> s(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        s[i] = std::pow(10.0, 0.5 * tau * static_cast<double>(i) / static_cast<double>(n - 1));
    }
    rng.shuffle(std::span<double>(s));
    CsrMatrix a = diag_scaled(d, s, s);
    return {std::move(d), std::move(s), std::move(a)};
}

inline CsrMatrix gen_random_spd(Index n, double density, double tau, CounterRng& rng) {
    return gen_random_spd_parts(n, density, tau, rng).matrix;
}

/// tridiag(-alpha, 2, -alpha).
inline CsrMatrix gen_tridiagonal(Index n, double alpha) {
    detail::require(n >= 2, "gen_tridiagonal: n must be >= 2");
    detail::require(alpha > 0.0 && alpha < 1.0, "gen_tridiagonal: alpha must lie in (0, 1)");
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(3 * n));
    for (Index i = 0; i < n; ++i) {
        if (i > 0) t.push_back({i, i - 1, -alpha});
        t.push_back({i, i, 2.0});
        if (i + 1 < n) t.push_back({i, i + 1, -alpha});
    }
    return csr_from_triplets(n, t);
}

/// Closed-form kappa_2 of tridiag(-alpha, 2, -alpha).
inline double tridiagonal_kappa2(Index n, double alpha) {
    const double c = 2.0 * alpha * std::cos(std::numbers::pi / static_cast<double>(n + 1));
    return (2.0 + c) / (2.0 - c);
}

/// -eps Lap u + beta . grad u on the m x m grid, h = 1 / (m + 1). Diffusion
/// uses the 5-point stencil scaled by eps / h^2; convection uses first-order
/// upwinding, so for beta_x > 0 the west coupling gains -beta_x / h and the
/// diagonal gains +beta_x / h (mirrored for other signs and for y).
inline CsrMatrix gen_convection_diffusion(Index m, double eps, double beta_x, double beta_y) {
    detail::require(m >= 2, "gen_convection_diffusion: m must be >= 2");
    detail::require(eps > 0.0, "gen_convection_diffusion: eps must be > 0");
    const double h = 1.0 / static_cast<double>(m + 1);
    const double d = eps / (h * h);
    const double cx = std::abs(beta_x) / h;
    const double cy = std::abs(beta_y) / h;
    const double diagonal = 4.0 * d + cx + cy;
    // Upwind side is the neighbour the flow comes from.
    return detail::grid_stencil(m, diagonal, [&](int dx, int dy) {
        double v = -d;
        if (dx == -1 && beta_x > 0) v -= cx;
        if (dx == 1 && beta_x < 0) v -= cx;
        if (dy == -1 && beta_y > 0) v -= cy;
        if (dy == 1 && beta_y < 0) v -= cy;
        return v;
    });
}

}  // namespace condest
