#pragma once

// Stage two: the inverse-probability-weighted exponential-family loss with a
// nuclear-norm penalty on the covariate-augmented matrix [X, Z], and the
// monotone accelerated proximal gradient solver for it.
//
//   objective(Z) = (1/(N L)) sum_i (1/pi_i) sum_j (r_ij / p_ij) (-y_ij z_ij + g_j(z_ij))
//                  + tau * || [X, Z] ||_*

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "svymc/dataset.hpp"
#include "svymc/errors.hpp"
#include "svymc/exp_family.hpp"
#include "svymc/matrix.hpp"
#include "svymc/missing_mechanism.hpp"

namespace svymc {

/// How the gradient step is formed.
enum class StepMode {
    standard_prox,  // T = Q - eta * grad, then threshold [X, T] at eta * tau
    as_printed,     // T = Q - svt(grad, tau) / tau, then threshold [X, T] at tau
};

/// How eta is chosen in standard_prox mode when no fixed step is given.
enum class StepRule {
    backtracking,  // local curvature start, doubled until the quadratic upper bound holds;
                   // between iterations the constant may relax by half
    global_bound,  // eta = 1 / (max_ij w_ij * sup_{|z| <= clamp} g''(z))
};

struct SolverConfig {
    double tau = 1e-3;
    int iterations = 200;
    StepMode step_mode = StepMode::standard_prox;
    StepRule step_rule = StepRule::backtracking;
    std::optional<double> step_size;        // fixed eta; overrides step_rule
    std::optional<double> population_size;  // overrides the dataset's N
    double clamp = 30.0;                    // natural-parameter box [-clamp, clamp]
    bool early_stop = false;
    double early_stop_tol = 1e-10;
    int early_stop_window = 10;

    void validate() const
    {
        if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("solver: tau must be positive");
        if (iterations < 1) throw InvalidInput("solver: iteration count must be at least 1");
        if (step_size && !(*step_size > 0.0)) throw InvalidInput("solver: step size must be positive");
        if (population_size && !(*population_size > 0.0)) throw InvalidInput("solver: N must be positive");
        if (!(clamp > 0.0)) throw InvalidInput("solver: clamp bound must be positive");
    }
};

struct CompletionDiagnostics {
    double final_nuclear_norm = 0.0;  // || [X, Z_hat] ||_*
    Index rank_estimate = 0;          // numerical rank of Z_hat
    std::size_t clamped_entries = 0;  // entries projected back into the box
    std::size_t rejected_steps = 0;   // candidates refused by the descent check
    std::size_t backtracks = 0;
    double final_step = 0.0;
};

struct CompletionResult {
    Matrix z_hat;
    std::vector<double> objective_trace;  // entry k = objective after iteration k (k = 0 is the start)
    std::vector<bool> accepted;           // whether iteration k took its candidate
    int iterations_run = 0;
    double tau_used = 0.0;
    CompletionDiagnostics diagnostics;
};

/// Raised when the objective stops being finite; carries the trace so far.
class SolverDiverged : public NumericalFailure {
public:
    SolverDiverged(const std::string& what, std::vector<double> trace)
        : NumericalFailure(what), trace_(std::move(trace))
    {
    }
    const std::vector<double>& trace() const { return trace_; }

private:
    std::vector<double> trace_;
};

/**
 * The smooth part of the objective with all weights folded in:
 * w_ij = r_ij / (N L pi_i p_ij), zero where the response is missing.
 * Missing y values are never read.
 */
class WeightedLoss {
public:
    WeightedLoss(const MixedDataset& data, const ResponseProbModel& probs, double population_size)
        : layout_(data.layout), weights_(data.rows(), data.columns()), y_(data.rows(), data.columns())
    {
        const Index n = data.rows();
        const Index cols = data.columns();
        if (probs.p_hat.rows() != n || probs.p_hat.cols() != cols) {
            throw ShapeError("weighted loss: probability matrix does not match the data");
        }
        if (!(population_size > 0.0)) throw InvalidInput("weighted loss: N must be positive");
        const double scale = 1.0 / (population_size * static_cast<double>(cols));
        for (Index j = 0; j < cols; ++j) {
            families_.push_back(layout_.family_of(static_cast<std::size_t>(j)));
            for (Index i = 0; i < n; ++i) {
                const bool observed = data.r(i, j) != 0.0;
                const double p = probs.p_hat(i, j);
                if (observed && !(p > 0.0)) throw InvalidInput("weighted loss: observed entry with p_hat <= 0");
                weights_(i, j) = observed ? scale / (data.pi(i) * p) : 0.0;
                y_(i, j) = observed ? data.y(i, j) : 0.0;
            }
        }
    }

    const Matrix& weights() const { return weights_; }
    const Family& family(Index column) const { return families_[static_cast<std::size_t>(column)]; }

    void check_domain(const Matrix& z) const
    {
        check_shape(z);
        for (Index j = 0; j < z.cols(); ++j) {
            const Family& f = family(j);
            for (Index i = 0; i < z.rows(); ++i) {
                if (!in_domain(f, z(i, j))) {
                    const std::size_t block = layout_.block_of(static_cast<std::size_t>(j));
                    throw DomainError("entry (" + std::to_string(i) + ", " + std::to_string(j) + ") of block " +
                                      std::to_string(block + 1) + " (" + std::string(family_name(f)) +
                                      ") is outside the natural-parameter domain");
                }
            }
        }
    }

    double value(const Matrix& z) const
    {
        check_domain(z);
        double total = 0.0;
        for (Index j = 0; j < z.cols(); ++j) {
            const Family& f = family(j);
            for (Index i = 0; i < z.rows(); ++i) {
                const double w = weights_(i, j);
                if (w == 0.0) continue;
                total += w * (-y_(i, j) * z(i, j) + log_partition(f, z(i, j)));
            }
        }
        return total;
    }

    Matrix gradient(const Matrix& z) const
    {
        check_domain(z);
        Matrix g = Matrix::Zero(z.rows(), z.cols());
        for (Index j = 0; j < z.cols(); ++j) {
            const Family& f = family(j);
            for (Index i = 0; i < z.rows(); ++i) {
                const double w = weights_(i, j);
                if (w == 0.0) continue;
                g(i, j) = w * (-y_(i, j) + mean_function(f, z(i, j)));
            }
        }
        return g;
    }

    /// max_ij w_ij g''(z_ij): curvature of the loss at z.
    double local_curvature(const Matrix& z) const
    {
        double c = 0.0;
        for (Index j = 0; j < z.cols(); ++j) {
            const Family& f = family(j);
            for (Index i = 0; i < z.rows(); ++i) {
                if (weights_(i, j) != 0.0) c = std::max(c, weights_(i, j) * variance_function(f, z(i, j)));
            }
        }
        return c;
    }

    /// max_ij w_ij * sup over the clamp box of g''.
    double global_curvature_bound(double clamp) const
    {
        double c = 0.0;
        for (Index j = 0; j < weights_.cols(); ++j) {
            const Family& f = family(j);
            const auto [lo, hi] = clamp_box(f, clamp);
            const double sup = std::max(variance_function(f, lo), variance_function(f, hi));
            c = std::max(c, weights_.col(j).maxCoeff() * sup);
        }
        return c;
    }

    /// Projects every entry into its family's clamp box; returns the number moved.
    std::size_t project(Matrix& z, double clamp) const
    {
        std::size_t moved = 0;
        for (Index j = 0; j < z.cols(); ++j) {
            const Family& f = family(j);
            for (Index i = 0; i < z.rows(); ++i) {
                const double p = project_to_box(f, z(i, j), clamp);
                if (p != z(i, j)) {
                    z(i, j) = p;
                    ++moved;
                }
            }
        }
        return moved;
    }

private:
    void check_shape(const Matrix& z) const
    {
        if (z.rows() != weights_.rows() || z.cols() != weights_.cols()) {
            throw ShapeError("parameter matrix has shape " + std::to_string(z.rows()) + "x" +
                             std::to_string(z.cols()) + ", expected " + std::to_string(weights_.rows()) + "x" +
                             std::to_string(weights_.cols()));
        }
    }

    CategoryLayout layout_;
    std::vector<Family> families_;
    Matrix weights_;
    Matrix y_;
};

inline double resolve_population_size(const MixedDataset& data, const std::optional<double>& override_n)
{
    return override_n ? *override_n : data.effective_population_size();
}

/// Surrogate-weighted loss, already divided by N L.
inline double weighted_loss(const Matrix& z, const MixedDataset& data, const ResponseProbModel& probs,
                            double population_size)
{
    return WeightedLoss(data, probs, population_size).value(z);
}

/// Gradient of weighted_loss; exactly zero at unobserved entries.
inline Matrix gradient(const Matrix& z, const MixedDataset& data, const ResponseProbModel& probs,
                       double population_size)
{
    return WeightedLoss(data, probs, population_size).gradient(z);
}

/// weighted_loss + tau * || [X, Z] ||_*, with X the dataset covariates.
inline double objective(const Matrix& z, const MixedDataset& data, const ResponseProbModel& probs,
                        const SolverConfig& config)
{
    const double n_pop = resolve_population_size(data, config.population_size);
    return weighted_loss(z, data, probs, n_pop) + config.tau * nuclear_norm(concat_cols(data.x, z));
}

namespace detail {

struct ObjectiveParts {
    double loss = 0.0;
    double penalty = 0.0;
    double total() const { return loss + penalty; }
};

inline ObjectiveParts evaluate(const WeightedLoss& loss, const Matrix& x, const Matrix& z, double tau)
{
    ObjectiveParts p;
    p.loss = loss.value(z);
    p.penalty = tau * nuclear_norm(concat_cols(x, z));
    return p;
}

inline Index numerical_rank(const Matrix& z)
{
    const Vector s = singular_values(z);
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double cut = s(0) * 1e-8 * static_cast<double>(std::max(z.rows(), z.cols()));
    Index r = 0;
    while (r < s.size() && s(r) > cut) ++r;
    return r;
}

}  // namespace detail

/**
 * Runs the monotone accelerated proximal gradient method.
 *
 * Start: Z1 = Z2 = rank-1 approximation of R o Y, projected into the clamp box.
 * Iteration k:
 *   theta = 2 / (k + 1)
 *   Q     = (1 - theta) Z1 + theta Z2
 *   T     = gradient step from Q (see StepMode)
 *   cand  = trailing L columns of svt([X, T])
 *   Z1    = cand if objective(cand) < objective(Z1) else Z1
 *   Z2    = Z1_prev + (cand - Z1_prev) / theta
 *
 * `x` is the covariate block placed in front of Z inside the penalty; it may
 * have zero columns, in which case the penalty is ||Z||_*.
 */
inline CompletionResult run_mmcshm(const MixedDataset& data, const ResponseProbModel& probs,
                                   const SolverConfig& config, const Matrix& x)
{
    config.validate();
    if (x.rows() != data.rows()) throw ShapeError("run_mmcshm: X row count differs from the data");
    require_finite(x, "run_mmcshm covariates");
    const double n_pop = resolve_population_size(data, config.population_size);
    const WeightedLoss loss(data, probs, n_pop);
    const double tau = config.tau;
    const Index cols = data.columns();

    CompletionResult result;
    result.tau_used = tau;
    auto& diag = result.diagnostics;

    Matrix z1 = rank1_approx(data.zero_filled());
    diag.clamped_entries += loss.project(z1, config.clamp);
    Matrix z2 = z1;
    double f1 = detail::evaluate(loss, x, z1, tau).total();
    if (!std::isfinite(f1)) throw SolverDiverged("run_mmcshm: initial objective is not finite", {f1});
    result.objective_trace.push_back(f1);
    result.accepted.push_back(true);

    double lipschitz = 0.0;
    if (config.step_mode == StepMode::standard_prox && !config.step_size) {
        if (config.step_rule == StepRule::global_bound) {
            lipschitz = loss.global_curvature_bound(config.clamp);
        } else {
            lipschitz = loss.local_curvature(z1);
        }
        if (!(lipschitz > 0.0) || !std::isfinite(lipschitz)) lipschitz = 1.0;
    }

    int flat_streak = 0;
    for (int k = 1; k <= config.iterations; ++k) {
        const double theta = 2.0 / (k + 1.0);
        Matrix q = (1.0 - theta) * z1 + theta * z2;
        diag.clamped_entries += loss.project(q, config.clamp);
        const Matrix grad = loss.gradient(q);

        Matrix cand;
        if (config.step_mode == StepMode::as_printed) {
            const Matrix t = q - svt(grad, tau) / tau;
            cand = svt(concat_cols(x, t), tau).rightCols(cols);
            diag.clamped_entries += loss.project(cand, config.clamp);
        } else {
            const bool adaptive = !config.step_size && config.step_rule == StepRule::backtracking;
            const double f_q = adaptive ? loss.value(q) : 0.0;
            if (adaptive && k > 1) {
                // may relax by at most half per iteration, so an expensive start does not pin eta
                const double local = loss.local_curvature(q);
                lipschitz = std::max(0.5 * lipschitz, std::isfinite(local) ? local : lipschitz);
            }
            for (int attempt = 0;; ++attempt) {
                const double eta = config.step_size ? *config.step_size : 1.0 / lipschitz;
                const Matrix t = q - eta * grad;
                cand = svt(concat_cols(x, t), eta * tau).rightCols(cols);
                diag.clamped_entries += loss.project(cand, config.clamp);
                diag.final_step = eta;
                if (!adaptive) break;
                const Matrix delta = cand - q;
                const double model = f_q + grad.cwiseProduct(delta).sum() + 0.5 * lipschitz * delta.squaredNorm();
                const double f_c = loss.value(cand);
                if (f_c <= model + 1e-12 * std::abs(model)) break;
                if (attempt >= 100) throw NumericalFailure("run_mmcshm: step-size search did not terminate");
                lipschitz *= 2.0;
                ++diag.backtracks;
            }
        }

        const double f_cand = detail::evaluate(loss, x, cand, tau).total();
        if (std::isnan(f_cand)) {
            throw SolverDiverged("run_mmcshm: objective became NaN at iteration " + std::to_string(k),
                                 result.objective_trace);
        }
        const bool take = f_cand < f1;
        Matrix next_z2 = z1 + (cand - z1) / theta;
        const double previous = f1;
        if (take) {
            z1 = std::move(cand);
            f1 = f_cand;
        } else {
            ++diag.rejected_steps;
        }
        z2 = std::move(next_z2);
        result.objective_trace.push_back(f1);
        result.accepted.push_back(take);
        result.iterations_run = k;

        if (config.early_stop) {
            const double rel = std::abs(previous - f1) / std::max(std::abs(previous), 1e-300);
            flat_streak = rel < config.early_stop_tol ? flat_streak + 1 : 0;
            if (flat_streak >= config.early_stop_window) break;
        }
    }

    diag.final_nuclear_norm = nuclear_norm(concat_cols(x, z1));
    diag.rank_estimate = detail::numerical_rank(z1);
    result.z_hat = std::move(z1);
    return result;
}

/// Convenience overload using the dataset's own covariates.
inline CompletionResult run_mmcshm(const MixedDataset& data, const ResponseProbModel& probs,
                                   const SolverConfig& config)
{
    return run_mmcshm(data, probs, config, data.x);
}

/// Y with every missing entry replaced by the fitted mean g'(z_hat).
inline Matrix impute_means(const MixedDataset& data, const Matrix& z_hat)
{
    Matrix out = data.y;
    for (Index j = 0; j < out.cols(); ++j) {
        const Family& f = data.layout.family_of(static_cast<std::size_t>(j));
        for (Index i = 0; i < out.rows(); ++i) {
            if (is_na(out(i, j))) out(i, j) = mean_function(f, z_hat(i, j));
        }
    }
    return out;
}

/// Mean-scale matrix g'(Z), column families from the layout.
inline Matrix mean_scale(const CategoryLayout& layout, const Matrix& z)
{
    Matrix out(z.rows(), z.cols());
    for (Index j = 0; j < z.cols(); ++j) {
        const Family& f = layout.family_of(static_cast<std::size_t>(j));
        for (Index i = 0; i < z.rows(); ++i) out(i, j) = mean_function(f, z(i, j));
    }
    return out;
}

}  // namespace svymc
