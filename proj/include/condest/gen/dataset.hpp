#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "condest/error.hpp"
#include "condest/gen/generators.hpp"
#include "condest/rng.hpp"
#include "condest/sparse/csr.hpp"
#include "condest/sparse/dense.hpp"
#include "condest/sparse/matrix_market.hpp"

namespace condest {

enum class MatrixClass : int {
    Poisson2D = 0,
    AnisotropicDiffusion = 1,
    HighContrast = 2,
    RandomSPD = 3,
    Tridiagonal = 4,
    ConvectionDiffusion = 5,
};

inline constexpr std::array<MatrixClass, 6> kAllClasses = {
    MatrixClass::Poisson2D,   MatrixClass::AnisotropicDiffusion, MatrixClass::HighContrast,
    MatrixClass::RandomSPD,   MatrixClass::Tridiagonal,          MatrixClass::ConvectionDiffusion,
};

inline std::string class_name(MatrixClass c) {
    switch (c) {
        case MatrixClass::Poisson2D: return "poisson2d";
        case MatrixClass::AnisotropicDiffusion: return "anisotropic";
        case MatrixClass::HighContrast: return "high_contrast";
        case MatrixClass::RandomSPD: return "random_spd";
        case MatrixClass::Tridiagonal: return "tridiagonal";
        case MatrixClass::ConvectionDiffusion: return "convection_diffusion";
    }
    throw InvalidArgument("class_name: unknown class");
}

inline MatrixClass class_from_name(const std::string& name) {
    for (auto c : kAllClasses) {
        if (class_name(c) == name) {
            return c;
        }
    }
    throw ConfigError("unknown matrix class '" + name + "'");
}

/// Closed interval [lo, hi].
struct Range {
    double lo = 0.0;
    double hi = 0.0;

    double sample(CounterRng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
    friend bool operator==(const Range&, const Range&) = default;
};

/// Generator configuration for one class.
struct GenSpec {
    MatrixClass cls = MatrixClass::Poisson2D;
    /// Requested dimension range. Grid classes use m = ceil(sqrt(n)).
    std::array<Index, 2> n_range{100, 400};
    Range anisotropy_exp{-8.0, -2.0};    // eps = 10^U(...)
    Range contrast_exp{6.0, 13.0};       // c ~ U(...)
    Range target_exp{7.0, 13.0};         // tau ~ U(...)
    Range alpha{0.1, 0.9};
    Range convection_eps_exp{-2.0, 0.0}; // eps = 10^U(...)
    Range convection_beta{-1.0, 1.0};    // beta_x, beta_y ~ U(...)
    double density = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_range[0] < 4 || n_range[1] < n_range[0]) {
            throw ConfigError("GenSpec: n_range must satisfy 4 <= min <= max");
        }
        for (const Range* r : {&anisotropy_exp, &contrast_exp, &target_exp, &alpha, &convection_eps_exp, &convection_beta}) {
            if (r->hi < r->lo) {
                throw ConfigError("GenSpec: parameter range is not ordered");
            }
        }
        if (anisotropy_exp.hi > 0.0) throw ConfigError("GenSpec: anisotropy exponent must be <= 0");
        if (contrast_exp.lo < 0.0) throw ConfigError("GenSpec: contrast exponent must be >= 0");
        if (target_exp.lo < 0.0) throw ConfigError("GenSpec: target exponent must be >= 0");
        if (alpha.lo <= 0.0 || alpha.hi >= 1.0) throw ConfigError("GenSpec: alpha must lie in (0, 1)");
        if (!(density > 0.0 && density <= 1.0)) throw ConfigError("GenSpec: density must lie in (0, 1]");
    }
};

/// Draws parameters for `spec` and generates one matrix. Parameters actually
/// used are written to `params`.
inline CsrMatrix generate_one(const GenSpec& spec, Index requested_n, CounterRng& rng,
                              std::map<std::string, double>& params) {
    params.clear();
    params["requested_n"] = static_cast<double>(requested_n);
    const auto grid_m = [&] {
        const Index m = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(requested_n))));
        params["m"] = static_cast<double>(m);
        return std::max<Index>(m, 2);
    };
    switch (spec.cls) {
        case MatrixClass::Poisson2D:
            return gen_poisson_2d(grid_m());
        case MatrixClass::AnisotropicDiffusion: {
            const Index m = grid_m();
            const double eps = std::pow(10.0, spec.anisotropy_exp.sample(rng));
            params["eps"] = eps;
            return gen_anisotropic(m, eps);
        }
        case MatrixClass::HighContrast: {
            const Index m = grid_m();
            const double c = spec.contrast_exp.sample(rng);
            params["c"] = c;
            return gen_high_contrast(m, c, rng);
        }
        case MatrixClass::RandomSPD: {
            const double tau = spec.target_exp.sample(rng);
            params["tau"] = tau;
            params["density"] = spec.density;
            return gen_random_spd(requested_n, spec.density, tau, rng);
        }
        case MatrixClass::Tridiagonal: {
            const double alpha = spec.alpha.sample(rng);
            params["alpha"] = alpha;
            return gen_tridiagonal(requested_n, alpha);
        }
        case MatrixClass::ConvectionDiffusion: {
            const Index m = grid_m();
            const double eps = std::pow(10.0, spec.convection_eps_exp.sample(rng));
            const double bx = spec.convection_beta.sample(rng);
            const double by = spec.convection_beta.sample(rng);
            params["eps"] = eps;
            params["beta_x"] = bx;
            params["beta_y"] = by;
            return gen_convection_diffusion(m, eps, bx, by);
        }
    }
    throw InvalidArgument("generate_one: unknown class");
}

/// A matrix with its exact condition numbers and norms in both p = 1 and 2.
struct LabeledMatrix {
    std::string id;
    CsrMatrix matrix;
    MatrixClass cls = MatrixClass::Poisson2D;
    double kappa1 = 1.0;
    double kappa2 = 1.0;
    double norm1 = 1.0;
    double norm2 = 1.0;
    std::map<std::string, double> params;
    int resamples = 0;

    double kappa(int p) const { return p == 1 ? kappa1 : kappa2; }
    double norm(int p) const { return p == 1 ? norm1 : norm2; }
};

/// Attaches exact labels. Throws SingularMatrix (or NumericalError) if the
/// matrix cannot be labelled.
inline void attach_labels(LabeledMatrix& lm, Index max_n = kDefaultExactCap) {
    const CsrMatrix& a = lm.matrix;
    lm.norm1 = norm_1(a);
    lm.kappa1 = exact_cond(a, 1, max_n);
    const auto sv = exact_singular_extremes(a);
    lm.norm2 = sv.sigma_max;
    lm.kappa2 = sv.sigma_max / sv.sigma_min;
    for (double k : {lm.kappa1, lm.kappa2}) {
        if (!std::isfinite(k) || k < 1.0 - 1e-10) {
            throw NumericalError("attach_labels: condition number " + std::to_string(k) + " is not >= 1");
        }
    }
    lm.kappa1 = std::max(lm.kappa1, 1.0);
    lm.kappa2 = std::max(lm.kappa2, 1.0);
}

enum class Split : int { Train = 0, Val = 1, Test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

struct Dataset {
    std::vector<LabeledMatrix> train;
    std::vector<LabeledMatrix> val;
    std::vector<LabeledMatrix> test;
    std::vector<GenSpec> specs;
    std::uint64_t seed = 0;
    int total_resamples = 0;

    std::vector<LabeledMatrix>& split(Split s) { return s == Split::Train ? train : s == Split::Val ? val : test; }
    const std::vector<LabeledMatrix>& split(Split s) const {
        return s == Split::Train ? train : s == Split::Val ? val : test;
    }
};

struct SplitCounts {
    int train = 0;
    int val = 0;
    int test = 0;
};

/// Default specification list: all six classes with the standard ranges.
inline std::vector<GenSpec> default_specs(std::array<Index, 2> n_range = {100, 400}) {
    std::vector<GenSpec> specs;
    for (auto c : kAllClasses) {
        GenSpec s;
        s.cls = c;
        s.n_range = n_range;
        specs.push_back(s);
    }
    return specs;
}

/// Generates and labels every split. Each matrix draws from its own
/// substream keyed on (seed, split, index, attempt), so results do not depend
/// on generation order. A draw whose labels fail is resampled with the next
/// attempt number; `on_resample` is notified.
inline Dataset sample_dataset(const std::vector<GenSpec>& specs, SplitCounts counts, std::uint64_t seed,
                              Index max_n = kDefaultExactCap,
                              const std::function<void(const std::string&)>& on_resample = {}) {
    if (specs.empty()) {
        throw ConfigError("sample_dataset: empty spec list");
    }
    if (counts.train < 1 || counts.val < 1 || counts.test < 1) {
        throw ConfigError("sample_dataset: every split needs at least one matrix");
    }
    for (const auto& s : specs) {
        s.validate();
    }
    constexpr int max_attempts = 50;
    Dataset ds;
    ds.specs = specs;
    ds.seed = seed;
    const std::array<std::pair<Split, int>, 3> plan = {
        {{Split::Train, counts.train}, {Split::Val, counts.val}, {Split::Test, counts.test}}};
    for (const auto& [split, count] : plan) {
        auto& out = ds.split(split);
        out.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            for (int attempt = 0;; ++attempt) {
                if (attempt == max_attempts) {
                    throw NumericalError("sample_dataset: could not label a draw after " + std::to_string(max_attempts) +
                                         " attempts");
                }
                CounterRng pick(hash_words({seed, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(i),
                                            static_cast<std::uint64_t>(attempt)}));
                const GenSpec& spec = specs[pick.below(specs.size())];
                const Index n = pick.between(spec.n_range[0], spec.n_range[1]);
                CounterRng rng(hash_words({seed, spec.seed, static_cast<std::uint64_t>(spec.cls),
                                           static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(attempt)}));
                LabeledMatrix lm;
                lm.id = std::string(split_name(split)) + "_" + std::to_string(i);
                lm.cls = spec.cls;
                lm.resamples = attempt;
                try {
                    lm.matrix = generate_one(spec, n, rng, lm.params);
                    attach_labels(lm, max_n);
                } catch (const Error& e) {
                    ++ds.total_resamples;
                    if (on_resample) {
                        on_resample(lm.id + " (" + class_name(spec.cls) + "): " + e.what());
                    }
                    continue;
                }
                out.push_back(std::move(lm));
                break;
            }
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/manifest.json plus <dir>/matrices/<id>.mtx

inline constexpr int kDatasetFormatVersion = 1;

inline nlohmann::json spec_to_json(const GenSpec& s) {
    auto range = [](const Range& r) { return nlohmann::json::array({r.lo, r.hi}); };
    return {
        {"class", class_name(s.cls)},
        {"n_range", {s.n_range[0], s.n_range[1]}},
        {"anisotropy_exp", range(s.anisotropy_exp)},
        {"contrast_exp", range(s.contrast_exp)},
        {"target_exp", range(s.target_exp)},
        {"alpha", range(s.alpha)},
        {"convection_eps_exp", range(s.convection_eps_exp)},
        {"convection_beta", range(s.convection_beta)},
        {"density", s.density},
        {"seed", s.seed},
    };
}

/// Missing keys keep their defaults.
inline GenSpec spec_from_json(const nlohmann::json& j) {
    GenSpec s;
    try {
        s.cls = class_from_name(j.at("class").get<std::string>());
        if (j.contains("n_range")) s.n_range = {j["n_range"][0].get<Index>(), j["n_range"][1].get<Index>()};
        auto range = [&](const char* key, Range& r) {
            if (j.contains(key)) r = {j[key][0].get<double>(), j[key][1].get<double>()};
        };
        range("anisotropy_exp", s.anisotropy_exp);
        range("contrast_exp", s.contrast_exp);
        range("target_exp", s.target_exp);
        range("alpha", s.alpha);
        range("convection_eps_exp", s.convection_eps_exp);
        range("convection_beta", s.convection_beta);
        if (j.contains("density")) s.density = j["density"].get<double>();
        if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("generator spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "matrices");
    nlohmann::json manifest;
    manifest["format_version"] = kDatasetFormatVersion;
    manifest["seed"] = ds.seed;
    manifest["total_resamples"] = ds.total_resamples;
    manifest["specs"] = nlohmann::json::array();
    for (const auto& s : ds.specs) {
        manifest["specs"].push_back(spec_to_json(s));
    }
    for (auto split : {Split::Train, Split::Val, Split::Test}) {
        auto& arr = manifest["splits"][split_name(split)];
        arr = nlohmann::json::array();
        for (const auto& lm : ds.split(split)) {
            const std::string file = "matrices/" + lm.id + ".mtx";
            mm::write_file((dir / file).string(), lm.matrix);
            arr.push_back({
                {"id", lm.id},
                {"file", file},
                {"class", class_name(lm.cls)},
                {"n", lm.matrix.n()},
                {"nnz", lm.matrix.nnz()},
                {"kappa1", lm.kappa1},
                {"kappa2", lm.kappa2},
                {"norm1", lm.norm1},
                {"norm2", lm.norm2},
                {"params", lm.params},
                {"resamples", lm.resamples},
            });
        }
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw ConfigError("save_dataset: cannot write manifest in " + dir.string());
    }
    out << manifest.dump(2) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw ConfigError("load_dataset: no manifest.json in '" + dir.string() + "'");
    }
    Dataset ds;
    try {
        const auto manifest = nlohmann::json::parse(in);
        if (manifest.at("format_version").get<int>() != kDatasetFormatVersion) {
            throw ConfigError("load_dataset: unsupported format version");
        }
        ds.seed = manifest.at("seed").get<std::uint64_t>();
        ds.total_resamples = manifest.value("total_resamples", 0);
        for (const auto& s : manifest.at("specs")) {
            ds.specs.push_back(spec_from_json(s));
        }
        for (auto split : {Split::Train, Split::Val, Split::Test}) {
            for (const auto& e : manifest.at("splits").at(split_name(split))) {
                LabeledMatrix lm;
                lm.id = e.at("id").get<std::string>();
                lm.cls = class_from_name(e.at("class").get<std::string>());
                lm.matrix = mm::read_file((dir / e.at("file").get<std::string>()).string());
                lm.kappa1 = e.at("kappa1").get<double>();
                lm.kappa2 = e.at("kappa2").get<double>();
                lm.norm1 = e.at("norm1").get<double>();
                lm.norm2 = e.at("norm2").get<double>();
                lm.params = e.at("params").get<std::map<std::string, double>>();
                lm.resamples = e.value("resamples", 0);
                ds.split(split).push_back(std::move(lm));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("load_dataset: malformed manifest: ") + e.what());
    }
    return ds;
}

}  // namespace condest
