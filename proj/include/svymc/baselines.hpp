#pragma once

// Comparison methods scored against the same truth as the proposed solver:
// Soft-Impute, within-stratum hot-deck, and an unweighted, covariate-free run
// of the completion solver.

#include <random>
#include <string>
#include <vector>

#include "svymc/dataset.hpp"
#include "svymc/errors.hpp"
#include "svymc/exp_family.hpp"
#include "svymc/matrix.hpp"
#include "svymc/missing_mechanism.hpp"
#include "svymc/solver.hpp"

namespace svymc {

enum class BaselineMethod { soft_impute, hot_deck, collective_unweighted };

inline std::string_view baseline_name(BaselineMethod m)
{
    switch (m) {
        case BaselineMethod::soft_impute: return "soft_impute";
        case BaselineMethod::hot_deck: return "hot_deck";
        case BaselineMethod::collective_unweighted: return "collective_unweighted";
    }
    return "unknown";
}

struct BaselineResult {
    BaselineMethod method = BaselineMethod::soft_impute;
    Matrix z_hat_natural;
    Matrix y_imputed;
    std::vector<double> objective_trace;
    int iterations = 0;
    std::string notes;
};

/// Natural-scale image of a mean-scale matrix (inverse of g' per column),
/// projected into the clamp box.
inline Matrix to_natural_scale(const Matrix& means, const CategoryLayout& layout, double clamp = 30.0,
                               double eps = 1e-3)
{
    Matrix z(means.rows(), means.cols());
    for (Index j = 0; j < means.cols(); ++j) {
        const Family& f = layout.family_of(static_cast<std::size_t>(j));
        for (Index i = 0; i < means.rows(); ++i) z(i, j) = project_to_box(f, inverse_mean(f, means(i, j), eps), clamp);
    }
    return z;
}

struct SoftImputeOptions {
    int max_iter = 100;
    double tol = 1e-5;
    double clamp = 30.0;
};

/**
 * Soft-Impute: M <- svt(P_obs(Y) + P_mis(M), tau) from M = 0 until the
 * relative Frobenius change falls below tol. The natural-scale estimate maps
 * the low-rank fit M, not the raw observations, through the inverse link.
 */
inline BaselineResult soft_impute(const Matrix& y, const Matrix& r, const CategoryLayout& layout, double tau,
                                  const SoftImputeOptions& options = {})
{
    if (!(tau >= 0.0)) throw InvalidInput("soft_impute: tau must be nonnegative");
    if (y.rows() != r.rows() || y.cols() != r.cols()) throw ShapeError("soft_impute: Y and R differ in shape");
    const Matrix observed = y.unaryExpr([](double v) { return is_na(v) ? 0.0 : v; });
    const Matrix mask = r;
    const Matrix unmask = (1.0 - r.array()).matrix();

    BaselineResult out;
    out.method = BaselineMethod::soft_impute;
    Matrix m = Matrix::Zero(y.rows(), y.cols());
    Matrix best = m;
    double best_obj = 0.5 * observed.squaredNorm();
    bool converged = false;
    for (int it = 1; it <= options.max_iter; ++it) {
        const Matrix filled = observed + unmask.cwiseProduct(m);
        const SvdFactors f = svd_thin(filled);
        Index keep = 0;
        while (keep < f.rank_bound() && f.singular_values(keep) > tau) ++keep;
        Matrix next = Matrix::Zero(y.rows(), y.cols());
        double penalty = 0.0;
        if (keep > 0) {
            const Vector shrunk = (f.singular_values.head(keep).array() - tau).matrix();
            next = f.u.leftCols(keep) * shrunk.asDiagonal() * f.v.leftCols(keep).transpose();
            penalty = tau * shrunk.sum();
        }
        const double obj = 0.5 * mask.cwiseProduct(observed - next).squaredNorm() + penalty;
        out.objective_trace.push_back(obj);
        const double change = (next - m).norm() / std::max(m.norm(), 1e-12);
        m = std::move(next);
        out.iterations = it;
        if (obj <= best_obj) {
            best_obj = obj;
            best = m;
        }
        if (change < options.tol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        out.notes = "no convergence after " + std::to_string(options.max_iter) + " iterations; best iterate returned";
        m = best;
    }
    out.y_imputed = observed + unmask.cwiseProduct(m);
    out.z_hat_natural = to_natural_scale(m, layout, options.clamp);
    return out;
}

/**
 * Hot-deck: every missing y_ij receives the value of a uniformly drawn
 * observed donor from column j in the same stratum, or from the whole column
 * when the stratum has none.
 */
template <class Rng>
BaselineResult hot_deck(const Matrix& y, const Matrix& r, const std::vector<std::size_t>& strata,
                        const CategoryLayout& layout, Rng& rng, double clamp = 30.0)
{
    if (static_cast<Index>(strata.size()) != y.rows()) throw ShapeError("hot_deck: strata length differs from n");
    std::size_t h_count = 0;
    for (auto h : strata) h_count = std::max(h_count, h + 1);

    BaselineResult out;
    out.method = BaselineMethod::hot_deck;
    out.y_imputed = y;
    std::size_t fallbacks = 0;
    for (Index j = 0; j < y.cols(); ++j) {
        std::vector<std::vector<Index>> donors(h_count);
        std::vector<Index> column_donors;
        for (Index i = 0; i < y.rows(); ++i) {
            if (r(i, j) != 0.0) {
                donors[strata[static_cast<std::size_t>(i)]].push_back(i);
                column_donors.push_back(i);
            }
        }
        bool any_missing = false;
        for (Index i = 0; i < y.rows() && !any_missing; ++i) any_missing = r(i, j) == 0.0;
        if (!any_missing) continue;
        if (column_donors.empty()) throw ColumnEmpty("hot_deck: column " + std::to_string(j + 1) + " has no observed entries");
        for (Index i = 0; i < y.rows(); ++i) {
            if (r(i, j) != 0.0) continue;
            const auto& cell = donors[strata[static_cast<std::size_t>(i)]];
            const auto& pool = cell.empty() ? column_donors : cell;
            if (cell.empty()) ++fallbacks;
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            out.y_imputed(i, j) = y(pool[pick(rng)], j);
        }
    }
    if (fallbacks) out.notes = std::to_string(fallbacks) + " entries used column-wide donors";
    out.z_hat_natural = to_natural_scale(out.y_imputed, layout, clamp);
    return out;
}

/**
 * The completion solver with every inclusion and response probability set to
 * one and no covariate block in the penalty, i.e. an unweighted
 * ||Z||_*-penalized exponential-family fit.
 */
inline BaselineResult collective_unweighted(const MixedDataset& data, SolverConfig config)
{
    MixedDataset flat = data;
    flat.pi = Vector::Ones(data.rows());
    flat.population_size = static_cast<double>(data.rows());
    config.population_size.reset();
    const auto probs = ResponseProbModel::constant(data.rows(), data.columns(), 1.0);
    const Matrix no_covariates(data.rows(), 0);
    CompletionResult fit = run_mmcshm(flat, probs, config, no_covariates);

    BaselineResult out;
    out.method = BaselineMethod::collective_unweighted;
    out.y_imputed = impute_means(data, fit.z_hat);
    out.z_hat_natural = std::move(fit.z_hat);
    out.objective_trace = std::move(fit.objective_trace);
    out.iterations = fit.iterations_run;
    return out;
}

}  // namespace svymc
