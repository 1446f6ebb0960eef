#pragma once

// Choosing tau: a generic grid search plus the two scoring protocols used
// with the completion solver (independent validation truth, k-fold masking of
// observed entries).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "svymc/dataset.hpp"
#include "svymc/errors.hpp"
#include "svymc/metrics.hpp"
#include "svymc/solver.hpp"

namespace svymc {

struct TauScore {
    double tau = 0.0;
    double score = 0.0;
};

struct TuneResult {
    double best_tau = 0.0;
    std::vector<TauScore> scores;  // in grid order
};

namespace detail {

inline double parse_real(std::string_view text)
{
    double v = 0.0;
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw InvalidInput("cannot parse number '" + std::string(text) + "'");
    }
    return v;
}

inline long parse_int(std::string_view text)
{
    const double v = parse_real(text);
    if (v != std::floor(v)) throw InvalidInput("expected an integer, got '" + std::string(text) + "'");
    return static_cast<long>(v);
}

}  // namespace detail

/**
 * Expands a grid description. Items are comma separated; each item is a
 * number, a power "b^e", or a power range "b^e1..b^e2" expanding to
 * b^e1, b^(e1+1), ..., b^e2. "2^-15..2^-1,1,2" gives 17 points.
 */
inline std::vector<double> parse_grid(std::string_view text)
{
    std::vector<double> out;
    const auto power = [](std::string_view item, double& base) {
        const std::size_t caret = item.find('^');
        if (caret == std::string_view::npos) {
            base = 0.0;
            return detail::parse_real(item);
        }
        base = detail::parse_real(item.substr(0, caret));
        return static_cast<double>(detail::parse_int(item.substr(caret + 1)));
    };
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string_view item = text.substr(pos, comma - pos);
        if (item.empty()) throw InvalidInput("empty item in grid '" + std::string(text) + "'");
        if (const std::size_t dots = item.find(".."); dots != std::string_view::npos) {
            double b1 = 0.0, b2 = 0.0;
            const double e1 = power(item.substr(0, dots), b1);
            const double e2 = power(item.substr(dots + 2), b2);
            if (b1 == 0.0 || b1 != b2 || e2 < e1) {
                throw InvalidInput("grid range '" + std::string(item) + "' must read b^e1..b^e2 with e1 <= e2");
            }
            for (double e = e1; e <= e2; e += 1.0) out.push_back(std::pow(b1, e));
        } else {
            double base = 0.0;
            const double v = power(item, base);
            out.push_back(base == 0.0 ? v : std::pow(base, v));
        }
        pos = comma + 1;
    }
    return out;
}

/// The default grid {2^-15, ..., 2^-1, 1, 2}.
inline std::vector<double> default_tau_grid() { return parse_grid("2^-15..2^-1,1,2"); }

/// Scores every grid value and returns the minimizer; ties go to the larger tau.
inline TuneResult select_tau(std::span<const double> grid, const std::function<double(double)>& score)
{
    if (grid.empty()) throw InvalidInput("tuning grid is empty");
    TuneResult result;
    bool have = false;
    double best_score = 0.0;
    for (double tau : grid) {
        const double s = score(tau);
        result.scores.push_back({tau, s});
        if (std::isnan(s)) continue;
        if (!have || s < best_score || (s == best_score && tau > result.best_tau)) {
            have = true;
            best_score = s;
            result.best_tau = tau;
        }
    }
    if (!have) throw NumericalFailure("tuning: every grid value produced an undefined score");
    return result;
}

/// Score = RE(Z_hat, truth) on an independently generated dataset.
struct ValidationSet {
    Matrix truth;
};

/// Score = sum over folds of squared error between g'(z_hat) and held-out y.
struct KFold {
    int folds = 5;
    std::uint64_t seed = 0;
};

using TuneProtocol = std::variant<ValidationSet, KFold>;

/// Assigns each observed entry (column-major order) to one of k folds.
inline std::vector<std::vector<std::pair<Index, Index>>> make_folds(const MixedDataset& data, int k,
                                                                    std::uint64_t seed)
{
    if (k < 2) throw InvalidInput("k-fold tuning needs at least 2 folds");
    std::vector<std::pair<Index, Index>> observed;
    for (Index j = 0; j < data.columns(); ++j)
        for (Index i = 0; i < data.rows(); ++i)
            if (data.r(i, j) != 0.0) observed.emplace_back(i, j);
    std::mt19937_64 rng(seed);
    std::shuffle(observed.begin(), observed.end(), rng);
    std::vector<std::vector<std::pair<Index, Index>>> folds(static_cast<std::size_t>(k));
    for (std::size_t t = 0; t < observed.size(); ++t) folds[t % folds.size()].push_back(observed[t]);
    for (std::size_t f = 0; f < folds.size(); ++f) {
        if (folds[f].empty()) throw FoldError("fold " + std::to_string(f + 1) + " has no observed entries");
    }
    return folds;
}

/**
 * Picks tau for run_mmcshm over `grid`. Every fit starts cold. The k-fold
 * protocol masks each fold in turn while keeping the response probabilities
 * fixed, and scores the held-out entries on the mean scale.
 */
inline TuneResult tune_tau(const MixedDataset& data, const ResponseProbModel& probs, const Matrix& x,
                           std::span<const double> grid, const TuneProtocol& protocol, SolverConfig base = {})
{
    if (grid.empty()) throw InvalidInput("tuning grid is empty");
    if (const auto* v = std::get_if<ValidationSet>(&protocol)) {
        return select_tau(grid, [&](double tau) {
            base.tau = tau;
            return relative_error(run_mmcshm(data, probs, base, x).z_hat, v->truth);
        });
    }
    const auto& kf = std::get<KFold>(protocol);
    const auto folds = make_folds(data, kf.folds, kf.seed);
    if (!base.population_size) base.population_size = data.effective_population_size();
    return select_tau(grid, [&](double tau) {
        base.tau = tau;
        double total = 0.0;
        for (const auto& fold : folds) {
            MixedDataset train = data;
            for (auto [i, j] : fold) {
                train.y(i, j) = kNA;
                train.r(i, j) = 0.0;
            }
            const Matrix z = run_mmcshm(train, probs, base, x).z_hat;
            for (auto [i, j] : fold) {
                const Family& f = data.layout.family_of(static_cast<std::size_t>(j));
                const double diff = mean_function(f, z(i, j)) - data.y(i, j);
                total += diff * diff;
            }
        }
        return total;
    });
}

}  // namespace svymc
