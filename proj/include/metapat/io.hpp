#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <string>
#include <variant>

#include "metapat/error.hpp"
#include "metapat/matrix.hpp"
#include "metapat/special.hpp"
#include "metapat/tsv.hpp"

namespace metapat {

inline constexpr double kPValueClamp = 1e-15;

enum class MatrixKind { pvalue, zstat };

/// Called with a message for each recoverable input oddity (clamped p-values).
using WarningSink = std::function<void(const std::string&)>;

inline void warn_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

namespace detail {

// Accepts a header either with a corner cell above the gene column or with
// one label per numeric column.
template <class Tag>
LabeledMatrix<Tag> numeric_table(const tsv::Table& table, const std::string& source) {
    if (table.rows.empty()) throw DomainError(source + ": matrix has no rows");
    const std::size_t width = table.rows.front().size();
    if (width < 2) throw DomainError(source + ": matrix has no study columns");
    const std::size_t studies = width - 1;

    LabeledMatrix<Tag> m;
    if (table.header.size() == width) {
        m.study_ids.assign(table.header.begin() + 1, table.header.end());
    } else if (table.header.size() == studies) {
        m.study_ids = table.header;
    } else {
        throw FormatError(source + ": header has " + std::to_string(table.header.size()) +
                          " fields but rows have " + std::to_string(width));
    }

    m.values = Matrix<double>(table.rows.size(), studies);
    m.gene_ids.reserve(table.rows.size());
    for (std::size_t g = 0; g < table.rows.size(); ++g) {
        const auto& row = table.rows[g];
        if (row.size() != width) {
            throw FormatError(source + ": line " + std::to_string(table.line_numbers[g]) + " has " +
                              std::to_string(row.size()) + " fields, expected " + std::to_string(width));
        }
        m.gene_ids.push_back(row[0]);
        for (std::size_t s = 0; s < studies; ++s) {
            auto v = tsv::to_double(row[s + 1]);
            if (!v) {
                throw ParseError(source + ": non-numeric cell '" + row[s + 1] + "' at gene '" + row[0] +
                                 "', study '" + m.study_ids[s] + "' (line " +
                                 std::to_string(table.line_numbers[g]) + ", column " + std::to_string(s + 2) +
                                 ")");
            }
            m.values(g, s) = *v;
        }
    }
    return m;
}

} // namespace detail

template <class Tag = GenericTag>
LabeledMatrix<Tag> read_matrix(const std::string& path) {
    return detail::numeric_table<Tag>(tsv::read_file(path), path);
}

/// Clamps into [eps, 1 - eps] and rejects values outside [0, 1]. Returns the
/// number of clamped cells.
inline std::size_t validate_pvalues(PValueMatrix& p, const std::string& source,
                                    const WarningSink& warn = warn_stderr) {
    std::size_t clamped = 0;
    for (std::size_t g = 0; g < p.genes(); ++g) {
        for (std::size_t s = 0; s < p.studies(); ++s) {
            double& v = p.values(g, s);
            if (!(v >= 0.0 && v <= 1.0)) {
                throw DomainError(source + ": p-value " + tsv::fmt(v) + " outside [0,1] at gene '" +
                                  p.gene_ids[g] + "', study '" + p.study_ids[s] + "'");
            }
            if (v < kPValueClamp || v > 1.0 - kPValueClamp) {
                const double c = std::clamp(v, kPValueClamp, 1.0 - kPValueClamp);
                if (warn) {
                    warn(source + ": p-value " + tsv::fmt_exact(v) + " at gene '" + p.gene_ids[g] + "', study '" +
                         p.study_ids[s] + "' clamped to " + tsv::fmt_exact(c));
                }
                v = c;
                ++clamped;
            }
        }
    }
    return clamped;
}

inline PValueMatrix parse_pvalues(const std::string& path, const WarningSink& warn = warn_stderr) {
    auto p = read_matrix<PValueTag>(path);
    validate_pvalues(p, path, warn);
    return p;
}

inline ZMatrix parse_zstats(const std::string& path) {
    auto z = read_matrix<ZStatTag>(path);
    for (std::size_t g = 0; g < z.genes(); ++g)
        for (std::size_t s = 0; s < z.studies(); ++s)
            if (!std::isfinite(z.values(g, s)))
                throw DomainError(path + ": non-finite Z at gene '" + z.gene_ids[g] + "', study '" +
                                  z.study_ids[s] + "'");
    return z;
}

inline std::variant<PValueMatrix, ZMatrix> parse_matrix(const std::string& path, MatrixKind kind,
                                                        const WarningSink& warn = warn_stderr) {
    if (kind == MatrixKind::pvalue) return parse_pvalues(path, warn);
    return parse_zstats(path);
}

/// Elementwise standard-normal quantile. Small one-sided p (down-regulation)
/// maps to large negative Z.
inline ZMatrix p_to_z(const PValueMatrix& p) {
    ZMatrix z;
    z.gene_ids = p.gene_ids;
    z.study_ids = p.study_ids;
    z.values = Matrix<double>(p.genes(), p.studies());
    auto in = p.values.flat();
    auto out = z.values.flat();
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = special::normal_quantile(std::clamp(in[i], kPValueClamp, 1.0 - kPValueClamp));
    }
    return z;
}

/// Folds two-sided p-values into one-sided p-values for down-regulation using
/// the sign of the estimated effect.
inline PValueMatrix two_sided_to_one_sided(const TableMatrix& p2, const Matrix<int>& sign) {
    if (p2.values.rows() != sign.rows() || p2.values.cols() != sign.cols()) {
        throw DomainError("two_sided_to_one_sided: p-value and sign matrices differ in shape");
    }
    PValueMatrix p1;
    p1.gene_ids = p2.gene_ids;
    p1.study_ids = p2.study_ids;
    p1.values = Matrix<double>(sign.rows(), sign.cols());
    for (std::size_t g = 0; g < sign.rows(); ++g) {
        for (std::size_t s = 0; s < sign.cols(); ++s) {
            const double p = p2.values(g, s);
            switch (sign(g, s)) {
                case 1: p1.values(g, s) = 1.0 - p / 2.0; break;
                case -1: p1.values(g, s) = p / 2.0; break;
                default:
                    throw DomainError("two_sided_to_one_sided: sign must be -1 or +1 (gene " +
                                      std::to_string(g) + ", study " + std::to_string(s) + ")");
            }
        }
    }
    return p1;
}

template <class Tag>
void write_matrix(const std::string& path, const LabeledMatrix<Tag>& m, const Provenance& prov) {
    tsv::Writer w(path, prov);
    std::vector<std::string> cells{"gene_id"};
    cells.insert(cells.end(), m.study_ids.begin(), m.study_ids.end());
    w.row(cells);
    for (std::size_t g = 0; g < m.genes(); ++g) {
        cells.assign(1, m.gene_ids[g]);
        for (std::size_t s = 0; s < m.studies(); ++s) cells.push_back(tsv::fmt(m.values(g, s)));
        w.row(cells);
    }
    w.close();
}

} // namespace metapat
