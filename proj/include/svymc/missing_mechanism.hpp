#pragma once

// Stage one: logistic models for the response indicators, one per
// (question, stratum) cell, and the clamped response-probability matrix used
// as inverse weights by the completion loss.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "svymc/dataset.hpp"
#include "svymc/errors.hpp"
#include "svymc/matrix.hpp"

namespace svymc {

struct LogisticOptions {
    int max_iter = 100;
    double tol = 1e-12;  // sup-norm of the mean gradient
    double ridge = 0.0;  // initial ridge; the intercept is never penalized
};

struct LogisticFit {
    Vector coefficients;  // intercept first
    bool converged = false;
    int iterations = 0;
    bool separation_fallback = false;
    bool degenerate_outcome = false;  // all indicators equal; intercept-only fit
    double ridge_used = 0.0;
};

/// Probability assigned to a cell whose indicators are all one.
inline constexpr double kSaturatedResponse = 1.0 - 1e-6;

/// logistic(c0 + c^T x), overflow-safe.
inline double predict_p(const LogisticFit& fit, const Eigen::Ref<const Vector>& x)
{
    const Vector& c = fit.coefficients;
    if (x.size() + 1 != c.size()) throw ShapeError("predict_p: covariate length does not match the fit");
    const double eta = c(0) + c.tail(x.size()).dot(x);
    return detail::logistic(eta);
}

namespace detail {

struct IrlsOutcome {
    Vector beta;
    bool converged = false;
    bool failed = false;
    int iterations = 0;
};

// Newton / IRLS on the mean (optionally weighted) Bernoulli log-likelihood
// with a ridge on the slopes. Rows must already be in canonical order.
inline IrlsOutcome irls(const Matrix& a, const Vector& y, const Vector& w, double ridge, int max_iter,
                        double tol)
{
    const Index n = a.rows();
    const Index p = a.cols();
    const double wsum = w.sum();
    IrlsOutcome out;
    out.beta = Vector::Zero(p);
    Vector ridge_mask = Vector::Ones(p);
    ridge_mask(0) = 0.0;

    for (int it = 0; it <= max_iter; ++it) {
        const Vector eta = a * out.beta;
        Vector mu(n), curv(n);
        for (Index i = 0; i < n; ++i) {
            mu(i) = logistic(eta(i));
            curv(i) = w(i) * mu(i) * (1.0 - mu(i));
        }
        Vector grad = a.transpose() * (w.cwiseProduct(y - mu)) / wsum;
        grad -= ridge * ridge_mask.cwiseProduct(out.beta);
        out.iterations = it;
        if (grad.cwiseAbs().maxCoeff() <= tol) {
            out.converged = true;
            return out;
        }
        if (it == max_iter) break;
        Matrix hess = a.transpose() * curv.asDiagonal() * a / wsum;
        hess.diagonal() += ridge * ridge_mask;
        Eigen::LDLT<Matrix> ldlt(hess);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            out.failed = true;
            return out;
        }
        const Vector step = ldlt.solve(grad);
        if (!step.allFinite() || ldlt.rcond() < 1e-14) {
            out.failed = true;
            return out;
        }
        out.beta += step;
        // Coefficients drifting this far mean the classes are (quasi-)separated.
        if (out.beta.cwiseAbs().maxCoeff() > 50.0) {
            out.failed = true;
            return out;
        }
    }
    return out;
}

}  // namespace detail

/**
 * Fits a logistic regression of the indicators on a design matrix whose
 * first column is all ones.
 *
 * Rows are put in a canonical order before any accumulation so the result is
 * bit-identical under row permutations. Degenerate outcomes (all zero or all
 * one) return an intercept-only fit at logit(1e-6) or logit(1 - 1e-6). If the
 * Newton iteration fails or diverges the ridge is escalated to 1e-4 and then
 * 1e-2, and separation_fallback is set.
 */
inline LogisticFit fit_logistic(const Matrix& features, const Vector& indicators,
                                const LogisticOptions& options = {}, const Vector* weights = nullptr)
{
    const Index n = features.rows();
    const Index p = features.cols();
    if (p < 1 || indicators.size() != n) throw ShapeError("fit_logistic: shape mismatch");
    if (weights && weights->size() != n) throw ShapeError("fit_logistic: weight length mismatch");
    if (n < p + 1) throw InvalidInput("fit_logistic: need at least D + 2 rows");
    require_finite(features, "fit_logistic");
    for (Index i = 0; i < n; ++i) {
        if (indicators(i) != 0.0 && indicators(i) != 1.0) {
            throw InvalidInput("fit_logistic: indicators must be 0 or 1");
        }
    }

    LogisticFit fit;
    const double ones = indicators.sum();
    if (ones == 0.0 || ones == static_cast<double>(n)) {
        const double level = ones == 0.0 ? 1.0 - kSaturatedResponse : kSaturatedResponse;
        fit.coefficients = Vector::Zero(p);
        fit.coefficients(0) = std::log(level / (1.0 - level));
        fit.converged = true;
        fit.degenerate_outcome = true;
        return fit;
    }

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const auto row_key_less = [&](Index a, Index b) {
        for (Index k = 0; k < p; ++k) {
            if (features(a, k) != features(b, k)) return features(a, k) < features(b, k);
        }
        if (indicators(a) != indicators(b)) return indicators(a) < indicators(b);
        if (weights && (*weights)(a) != (*weights)(b)) return (*weights)(a) < (*weights)(b);
        return false;
    };
    std::stable_sort(order.begin(), order.end(), row_key_less);

    Matrix a(n, p);
    Vector y(n), w(n);
    for (Index i = 0; i < n; ++i) {
        const Index src = order[static_cast<std::size_t>(i)];
        a.row(i) = features.row(src);
        y(i) = indicators(src);
        w(i) = weights ? (*weights)(src) : 1.0;
    }

    std::vector<double> ridges{options.ridge};
    for (double r : {1e-4, 1e-2}) {
        if (r > options.ridge) ridges.push_back(r);
    }
    for (std::size_t attempt = 0; attempt < ridges.size(); ++attempt) {
        auto out = detail::irls(a, y, w, ridges[attempt], options.max_iter, options.tol);
        fit.coefficients = out.beta;
        fit.iterations = out.iterations;
        fit.converged = out.converged;
        fit.ridge_used = ridges[attempt];
        fit.separation_fallback = attempt > 0;
        if (out.converged && !out.failed) return fit;
    }
    if (!fit.coefficients.allFinite()) fit.coefficients = Vector::Zero(p);
    return fit;
}

struct ResponseModelOptions {
    double p_floor = 0.01;
    LogisticOptions logistic;
    bool use_design_weights = false;  // weight rows by 1/pi in each fit
};

/**
 * Fitted response model: one logistic fit per (column, stratum) and the
 * plug-in probability matrix, clamped to [p_floor, 1].
 */
struct ResponseProbModel {
    std::vector<std::vector<LogisticFit>> fits;  // fits[column][stratum]
    Matrix p_hat;
    double p_floor = 0.01;

    const LogisticFit& fit(std::size_t column, std::size_t stratum) const { return fits.at(column).at(stratum); }

    /// Fit for question j of block s in stratum h.
    const LogisticFit& fit(const CategoryLayout& layout, std::size_t block, std::size_t question,
                           std::size_t stratum) const
    {
        return fit(layout.block_offset(block) + question, stratum);
    }

    std::size_t degenerate_cells() const
    {
        std::size_t c = 0;
        for (const auto& col : fits)
            for (const auto& f : col) c += f.degenerate_outcome ? 1 : 0;
        return c;
    }

    std::size_t separation_cells() const
    {
        std::size_t c = 0;
        for (const auto& col : fits)
            for (const auto& f : col) c += f.separation_fallback ? 1 : 0;
        return c;
    }

    /// Model with every probability equal to p (no fits), e.g. p = 1 to
    /// switch inverse weighting off.
    static ResponseProbModel constant(Index rows, Index cols, double p)
    {
        ResponseProbModel m;
        m.p_hat = Matrix::Constant(rows, cols, p);
        m.p_floor = std::min(p, 1.0);
        return m;
    }
};

inline ResponseProbModel estimate_response_probs(const MixedDataset& data, const ResponseModelOptions& options = {})
{
    if (!(options.p_floor > 0.0 && options.p_floor < 1.0)) {
        throw InvalidInput("estimate_response_probs: p_floor must lie in (0, 1)");
    }
    const Index n = data.rows();
    const Index cols = data.columns();
    const Index d = data.covariate_dim();
    const auto groups = data.rows_by_stratum();

    std::vector<Matrix> designs;
    std::vector<Vector> design_weights;
    for (std::size_t h = 0; h < groups.size(); ++h) {
        const auto& rows = groups[h];
        if (static_cast<Index>(rows.size()) < d + 2) {
            const std::string label = h < data.stratum_labels.size() ? data.stratum_labels[h] : std::to_string(h + 1);
            throw StratumTooSmall("stratum '" + label + "' has " + std::to_string(rows.size()) +
                                  " rows; at least " + std::to_string(d + 2) + " are required");
        }
        Matrix a(static_cast<Index>(rows.size()), d + 1);
        Vector w(static_cast<Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            a(static_cast<Index>(k), 0) = 1.0;
            a.row(static_cast<Index>(k)).tail(d) = data.x.row(rows[k]);
            w(static_cast<Index>(k)) = 1.0 / data.pi(rows[k]);
        }
        w /= w.mean();
        designs.push_back(std::move(a));
        design_weights.push_back(std::move(w));
    }

    ResponseProbModel model;
    model.p_floor = options.p_floor;
    model.p_hat = Matrix(n, cols);
    model.fits.assign(static_cast<std::size_t>(cols), std::vector<LogisticFit>(groups.size()));
    for (Index j = 0; j < cols; ++j) {
        for (std::size_t h = 0; h < groups.size(); ++h) {
            const auto& rows = groups[h];
            Vector ind(static_cast<Index>(rows.size()));
            for (std::size_t k = 0; k < rows.size(); ++k) ind(static_cast<Index>(k)) = data.r(rows[k], j);
            auto& fit = model.fits[static_cast<std::size_t>(j)][h];
            fit = fit_logistic(designs[h], ind, options.logistic,
                               options.use_design_weights ? &design_weights[h] : nullptr);
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const double p = predict_p(fit, data.x.row(rows[k]).transpose());
                model.p_hat(rows[k], j) = std::clamp(p, options.p_floor, 1.0);
            }
        }
    }
    return model;
}

}  // namespace svymc
