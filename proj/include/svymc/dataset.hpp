#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "svymc/errors.hpp"
#include "svymc/exp_family.hpp"
#include "svymc/matrix.hpp"

namespace svymc {

/// Affine map applied to a column at load time: stored = (raw - center) / scale.
struct ColumnTransform {
    double center = 0.0;
    double scale = 1.0;

    double forward(double v) const { return (v - center) / scale; }
    double inverse(double v) const { return v * scale + center; }
    bool is_identity() const { return center == 0.0 && scale == 1.0; }
};

/**
 * A sampled survey data frame: responses with missing entries, the
 * response indicator, fully observed covariates, strata and inclusion
 * probabilities.
 *
 * Strata are stored as 0-based contiguous indices; the original labels are
 * kept in stratum_labels for output.
 */
struct MixedDataset {
    Matrix y;                       // n x L, kNA where not observed
    Matrix r;                       // n x L, 1 observed / 0 missing
    Matrix x;                       // n x D
    std::vector<std::size_t> strata;
    Vector pi;                      // first-order inclusion probabilities
    CategoryLayout layout;
    std::optional<double> population_size;

    std::vector<std::string> response_names;
    std::vector<std::string> covariate_names;
    std::vector<std::string> stratum_labels;
    std::vector<ColumnTransform> response_transforms;
    std::vector<ColumnTransform> covariate_transforms;

    Index rows() const { return y.rows(); }
    Index columns() const { return y.cols(); }
    Index covariate_dim() const { return x.cols(); }

    std::size_t stratum_count() const
    {
        return strata.empty() ? 0 : *std::max_element(strata.begin(), strata.end()) + 1;
    }

    std::vector<std::vector<Index>> rows_by_stratum() const
    {
        std::vector<std::vector<Index>> out(stratum_count());
        for (std::size_t i = 0; i < strata.size(); ++i) out[strata[i]].push_back(static_cast<Index>(i));
        return out;
    }

    /// Population size if known, else the Horvitz-Thompson estimate sum 1/pi.
    double effective_population_size() const
    {
        if (population_size) return *population_size;
        return pi.cwiseInverse().sum();
    }

    double response_rate() const
    {
        return r.size() ? r.sum() / static_cast<double>(r.size()) : 0.0;
    }

    /// Throws if any structural invariant is broken.
    void validate() const
    {
        const Index n = y.rows();
        if (n < 1 || y.cols() < 1) throw ShapeError("dataset: empty response matrix");
        if (r.rows() != n || r.cols() != y.cols()) throw ShapeError("dataset: R shape differs from Y");
        if (x.rows() != n) throw ShapeError("dataset: X row count differs from Y");
        if (static_cast<Index>(strata.size()) != n) throw ShapeError("dataset: strata length differs from n");
        if (pi.size() != n) throw ShapeError("dataset: pi length differs from n");
        if (static_cast<Index>(layout.total_columns()) != y.cols()) {
            throw ShapeError("dataset: layout covers " + std::to_string(layout.total_columns()) +
                             " columns but Y has " + std::to_string(y.cols()));
        }
        if (!x.allFinite()) throw InvalidInput("dataset: covariates must be fully observed and finite");
        for (Index i = 0; i < n; ++i) {
            if (!(pi(i) > 0.0 && pi(i) <= 1.0)) {
                throw WeightError("dataset: inclusion probability of row " + std::to_string(i) +
                                  " is outside (0, 1]");
            }
            for (Index j = 0; j < y.cols(); ++j) {
                const bool observed = !is_na(y(i, j));
                if ((r(i, j) == 1.0) != observed || (r(i, j) != 0.0 && r(i, j) != 1.0)) {
                    throw InvalidInput("dataset: R disagrees with the missing markers of Y");
                }
                if (observed && !std::isfinite(y(i, j))) throw InvalidInput("dataset: infinite response");
            }
        }
        std::vector<bool> seen(stratum_count(), false);
        for (auto h : strata) seen[h] = true;
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
            throw InvalidInput("dataset: stratum indices are not contiguous");
        }
    }

    /// Assembles a dataset, deriving R from the missing markers of Y.
    static MixedDataset from_observations(Matrix y, Matrix x, std::vector<std::size_t> strata, Vector pi,
                                          CategoryLayout layout,
                                          std::optional<double> population_size = std::nullopt)
    {
        MixedDataset d;
        d.r = Matrix(y.rows(), y.cols());
        for (Index i = 0; i < y.rows(); ++i)
            for (Index j = 0; j < y.cols(); ++j) d.r(i, j) = is_na(y(i, j)) ? 0.0 : 1.0;
        d.y = std::move(y);
        d.x = std::move(x);
        d.strata = std::move(strata);
        d.pi = std::move(pi);
        d.layout = std::move(layout);
        d.population_size = population_size;
        d.fill_default_names();
        d.validate();
        return d;
    }

    void fill_default_names()
    {
        if (response_names.size() != static_cast<std::size_t>(y.cols())) {
            response_names.clear();
            for (Index j = 0; j < y.cols(); ++j) response_names.push_back("y" + std::to_string(j + 1));
        }
        if (covariate_names.size() != static_cast<std::size_t>(x.cols())) {
            covariate_names.clear();
            for (Index j = 0; j < x.cols(); ++j) covariate_names.push_back("x" + std::to_string(j + 1));
        }
        if (stratum_labels.size() != stratum_count()) {
            stratum_labels.clear();
            for (std::size_t h = 0; h < stratum_count(); ++h) stratum_labels.push_back(std::to_string(h + 1));
        }
        response_transforms.resize(static_cast<std::size_t>(y.cols()));
        covariate_transforms.resize(static_cast<std::size_t>(x.cols()));
    }

    /// Y with missing entries replaced by zero, i.e. R o Y.
    Matrix zero_filled() const { return y.unaryExpr([](double v) { return is_na(v) ? 0.0 : v; }); }
};

}  // namespace svymc
