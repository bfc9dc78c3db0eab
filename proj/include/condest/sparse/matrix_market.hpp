#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "condest/error.hpp"
#include "condest/sparse/csr.hpp"

namespace condest::mm {

// Matrix Market coordinate files: "%%MatrixMarket matrix coordinate real
// general|symmetric", 1-based indices. Symmetric files store the lower
// triangle and are expanded on read.

inline std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline CsrMatrix read(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw InvalidArgument("matrix market: empty input");
    }
    std::istringstream banner(lowercase(line));
    std::string tag, object, format, field, symmetry;
    banner >> tag >> object >> format >> field >> symmetry;
    if (tag != "%%matrixmarket" || object != "matrix" || format != "coordinate") {
        throw InvalidArgument("matrix market: unsupported banner '" + line + "'");
    }
    if (field != "real" && field != "integer" && field != "double") {
        throw InvalidArgument("matrix market: unsupported field '" + field + "'");
    }
    const bool symmetric = symmetry == "symmetric";
    if (!symmetric && symmetry != "general") {
        throw InvalidArgument("matrix market: unsupported symmetry '" + symmetry + "'");
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '%') {
            break;
        }
    }
    std::istringstream size_line(line);
    Index rows = 0, cols = 0, entries = 0;
    if (!(size_line >> rows >> cols >> entries)) {
        throw InvalidArgument("matrix market: bad size line");
    }
    if (rows != cols) {
        throw InvalidArgument("matrix market: matrix is not square");
    }
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(symmetric ? 2 * entries : entries));
    for (Index k = 0; k < entries; ++k) {
        Index i = 0, j = 0;
        std::string value_text;
        if (!(in >> i >> j >> value_text)) {
            throw InvalidArgument("matrix market: truncated entry list");
        }
        double v = 0.0;
        const auto res = std::from_chars(value_text.data(), value_text.data() + value_text.size(), v);
        if (res.ec != std::errc{}) {
            throw InvalidArgument("matrix market: bad value '" + value_text + "'");
        }
        triplets.push_back({i - 1, j - 1, v});
        if (symmetric && i != j) {
            triplets.push_back({j - 1, i - 1, v});
        }
    }
    return csr_from_triplets(rows, triplets);
}

inline CsrMatrix read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("matrix market: cannot open '" + path + "'");
    }
    return read(in);
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Writes in general (unsymmetric) storage; values round-trip exactly.
inline void write(std::ostream& out, const CsrMatrix& a) {
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.n() << ' ' << a.n() << ' ' << a.nnz() << '\n';
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (Index i = 0; i < a.n(); ++i) {
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            out << (i + 1) << ' ' << (ci[k] + 1) << ' ' << format_double(v[k]) << '\n';
        }
    }
}

/// Writes the lower triangle with the symmetric qualifier. Throws if A is
/// not exactly symmetric.
inline void write_symmetric(std::ostream& out, const CsrMatrix& a) {
    if (!is_symmetric(a)) {
        throw InvalidArgument("matrix market: write_symmetric on nonsymmetric matrix");
    }
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    Index lower = 0;
    for (Index i = 0; i < a.n(); ++i) {
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            lower += ci[k] <= i ? 1 : 0;
        }
    }
    out << "%%MatrixMarket matrix coordinate real symmetric\n";
    out << a.n() << ' ' << a.n() << ' ' << lower << '\n';
    for (Index i = 0; i < a.n(); ++i) {
        for (Index k = rp[i]; k < rp[i + 1]; ++k) {
            if (ci[k] <= i) {
                out << (i + 1) << ' ' << (ci[k] + 1) << ' ' << format_double(v[k]) << '\n';
            }
        }
    }
}

inline void write_file(const std::string& path, const CsrMatrix& a) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("matrix market: cannot write '" + path + "'");
    }
    write(out, a);
}

}  // namespace condest::mm
