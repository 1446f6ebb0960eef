#pragma once

// Dense matrix kernels used by the completion solver: thin SVD, rank-1
// approximation, singular value thresholding, norms and concatenation.
//
// Observation matrices mark unavailable entries with a quiet NaN (see kNA);
// every kernel here expects a fully defined matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "svymc/errors.hpp"

namespace svymc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Not-available marker for observation matrices.
inline constexpr double kNA = std::numeric_limits<double>::quiet_NaN();

inline bool is_na(double v) { return std::isnan(v); }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const char* what)
{
    if (!m.allFinite()) {
        throw InvalidInput(std::string(what) + ": matrix has non-finite entries");
    }
}

/**
 * Thin singular value decomposition M = U diag(s) V^T.
 *
 * U is rows x r, V is cols x r with r = min(rows, cols), and the singular
 * values are sorted in nonincreasing order. Signs of the singular vectors
 * are whatever the backend produces; callers must not depend on them.
 */
struct SvdFactors {
    Matrix u;
    Vector singular_values;
    Matrix v;

    Index rank_bound() const { return singular_values.size(); }

    Matrix reconstruct() const
    {
        return u * singular_values.asDiagonal() * v.transpose();
    }
};

namespace detail {

template <int Options>
Eigen::BDCSVD<Matrix> checked_svd(const Matrix& m, const char* what)
{
    require_finite(m, what);
    Eigen::BDCSVD<Matrix> svd(m, Options);
    if (svd.info() != Eigen::Success || !svd.singularValues().allFinite()) {
        throw NumericalFailure(std::string(what) + ": SVD did not converge");
    }
    return svd;
}

}  // namespace detail

inline SvdFactors svd_thin(const Matrix& m)
{
    auto svd = detail::checked_svd<Eigen::ComputeThinU | Eigen::ComputeThinV>(m, "svd_thin");
    return SvdFactors{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

/// Singular values only, nonincreasing.
inline Vector singular_values(const Matrix& m)
{
    if (m.size() == 0) return Vector();
    auto svd = detail::checked_svd<0>(m, "singular_values");
    return svd.singularValues();
}

/// Best rank-1 approximation in Frobenius norm: sigma_1 u_1 v_1^T.
inline Matrix rank1_approx(const Matrix& m)
{
    const SvdFactors f = svd_thin(m);
    if (f.rank_bound() == 0) return Matrix::Zero(m.rows(), m.cols());
    return f.singular_values(0) * f.u.col(0) * f.v.col(0).transpose();
}

/// Singular value thresholding: U diag((s_i - tau)_+) V^T.
/// This is the proximal operator of tau * nuclear norm.
inline Matrix svt(const Matrix& m, double tau)
{
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
        throw InvalidInput("svt: threshold must be a finite nonnegative number");
    }
    const SvdFactors f = svd_thin(m);
    Index keep = 0;
    while (keep < f.rank_bound() && f.singular_values(keep) > tau) ++keep;
    if (keep == 0) return Matrix::Zero(m.rows(), m.cols());
    const Vector shrunk = (f.singular_values.head(keep).array() - tau).matrix();
    return f.u.leftCols(keep) * shrunk.asDiagonal() * f.v.leftCols(keep).transpose();
}

struct MatrixNorms {
    double frobenius = 0.0;
    double operator_norm = 0.0;
    double nuclear = 0.0;
    double sup = 0.0;  // max absolute entry
};

inline MatrixNorms norms(const Matrix& m)
{
    require_finite(m, "norms");
    MatrixNorms out;
    if (m.size() == 0) return out;
    out.frobenius = m.norm();
    out.sup = m.cwiseAbs().maxCoeff();
    const Vector s = singular_values(m);
    out.operator_norm = s.size() ? s(0) : 0.0;
    out.nuclear = s.sum();
    return out;
}

inline double nuclear_norm(const Matrix& m) { return singular_values(m).sum(); }

inline double sup_norm(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// [a, b]: a occupies the leading columns. Either side may have zero columns.
inline Matrix concat_cols(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: row mismatch (" + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()) + ")");
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a;
    out.rightCols(b.cols()) = b;
    return out;
}

}  // namespace svymc
