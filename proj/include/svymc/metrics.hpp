#pragma once

#include <string>
#include <vector>

#include "svymc/errors.hpp"
#include "svymc/exp_family.hpp"
#include "svymc/matrix.hpp"

namespace svymc {

/// RE(S_hat, S*) = ||S_hat - S*||_F / ||S*||_F.
inline double relative_error(const Matrix& estimate, const Matrix& truth)
{
    if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
        throw ShapeError("relative_error: shapes differ");
    }
    const double denom = truth.norm();
    if (!(denom > 0.0)) throw DegenerateTruth("relative_error: truth has zero Frobenius norm");
    return (estimate - truth).norm() / denom;
}

/// Relative error restricted to each block of columns, in layout order.
inline std::vector<double> block_relative_errors(const Matrix& estimate, const Matrix& truth,
                                                 const CategoryLayout& layout)
{
    std::vector<double> out;
    for (std::size_t s = 0; s < layout.block_count(); ++s) {
        const auto off = static_cast<Index>(layout.block_offset(s));
        const auto width = static_cast<Index>(layout.blocks()[s].columns);
        out.push_back(relative_error(estimate.middleCols(off, width), truth.middleCols(off, width)));
    }
    return out;
}

/// Short unique label for block s, e.g. "gaussian" or "block2_poisson" when a family repeats.
inline std::string block_label(const CategoryLayout& layout, std::size_t s)
{
    const Family& f = layout.blocks()[s].family;
    std::size_t same = 0;
    for (const auto& b : layout.blocks()) same += b.family.kind == f.kind ? 1 : 0;
    if (same == 1) return std::string(family_name(f));
    return "block" + std::to_string(s + 1) + "_" + std::string(family_name(f));
}

}  // namespace svymc
