#pragma once

// Finite-population generator and the stratified two-stage cluster design:
// PPS-with-replacement selection of clusters followed by SRSWOR of elements
// inside each selected cluster.

#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "svymc/dataset.hpp"
#include "svymc/errors.hpp"
#include "svymc/exp_family.hpp"
#include "svymc/matrix.hpp"

namespace svymc {

using Rng = std::mt19937_64;

/// Seed of replicate r in a Monte Carlo study.
inline std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t replicate) { return base_seed ^ replicate; }

struct PopulationSpec {
    std::size_t strata = 9;
    std::size_t m1 = 5;   // clusters drawn per stratum
    std::size_t m2 = 20;  // elements drawn per selected cluster
    std::size_t covariate_dim = 3;
    CategoryLayout layout{{{Family::gaussian(), 30}, {Family::poisson(), 30}, {Family::bernoulli(), 30}}};
    double xi = 0.3;  // location of the response-model intercepts
    std::uint64_t seed = 1;

    std::size_t sample_size() const { return strata * m1 * m2; }

    void validate() const
    {
        if (strata < 1 || m1 < 1 || m2 < 1 || covariate_dim < 1) {
            throw InvalidInput("population spec: H, m1, m2 and D must all be at least 1");
        }
        if (layout.block_count() == 0) throw InvalidInput("population spec: empty layout");
    }
};

struct SyntheticTruth {
    CategoryLayout layout;
    Matrix x_pop;  // N x D
    Matrix z_pop;  // N x L
    std::vector<double> stratum_effects;                     // a_h
    std::vector<std::vector<double>> cluster_effects;        // b_hi
    std::vector<std::vector<std::size_t>> cluster_sizes;     // M_hi
    std::vector<std::vector<std::size_t>> cluster_offsets;   // first population row of cluster (h, i)
    std::vector<std::size_t> stratum_sizes;                  // N_h
    std::vector<std::vector<Vector>> zeta;                   // zeta[column][stratum], length D + 1

    std::size_t population_size() const { return static_cast<std::size_t>(x_pop.rows()); }
    std::size_t stratum_count() const { return stratum_sizes.size(); }
};

struct SampledData {
    MixedDataset dataset;
    Matrix truth_z;                           // rows of z_pop for the sampled units
    Matrix true_p;                            // response probabilities of the sampled entries
    std::vector<std::size_t> population_rows; // population index of each sampled row
};

namespace detail {

inline double exp1(Rng& rng) { return std::exponential_distribution<double>(1.0)(rng); }

inline std::size_t shifted_poisson(double rate, std::size_t add, Rng& rng)
{
    const auto k = std::poisson_distribution<std::int64_t>(rate)(rng);
    return 5 * static_cast<std::size_t>(k) + add;
}

}  // namespace detail

/**
 * Draws a finite population:
 *   a_h ~ Ex(1), M_h = 5 Po(a_h) + 20 clusters,
 *   b_hi ~ Ex(1), M_hi = 5 Po(a_h + b_hi) + 30 elements,
 *   X_hi = X0 / ||X0||_inf with X0 ~ Ex(1),
 *   Z_hi^(s) = X_hi W / ||X_hi W||_inf with W ~ U(0, 2) of size D x m_s,
 * and response-model coefficients with intercept ~ N(xi, 0.1^2) and slopes
 * ~ N(0.3, 0.1^2) for every (column, stratum).
 */
inline SyntheticTruth generate_population(const PopulationSpec& spec, Rng& rng)
{
    spec.validate();
    const std::size_t h_count = spec.strata;
    const auto d = static_cast<Index>(spec.covariate_dim);
    const auto cols = static_cast<Index>(spec.layout.total_columns());

    SyntheticTruth t;
    t.layout = spec.layout;
    t.stratum_effects.resize(h_count);
    t.cluster_effects.resize(h_count);
    t.cluster_sizes.resize(h_count);
    t.cluster_offsets.resize(h_count);
    t.stratum_sizes.assign(h_count, 0);

    std::size_t total = 0;
    for (std::size_t h = 0; h < h_count; ++h) {
        const double a = detail::exp1(rng);
        t.stratum_effects[h] = a;
        const std::size_t clusters = detail::shifted_poisson(a, 20, rng);
        for (std::size_t i = 0; i < clusters; ++i) {
            const double b = detail::exp1(rng);
            const std::size_t size = detail::shifted_poisson(a + b, 30, rng);
            t.cluster_effects[h].push_back(b);
            t.cluster_sizes[h].push_back(size);
            t.cluster_offsets[h].push_back(total);
            total += size;
            t.stratum_sizes[h] += size;
        }
    }

    t.x_pop.resize(static_cast<Index>(total), d);
    t.z_pop.resize(static_cast<Index>(total), cols);
    std::uniform_real_distribution<double> unif02(0.0, 2.0);
    for (std::size_t h = 0; h < h_count; ++h) {
        for (std::size_t i = 0; i < t.cluster_sizes[h].size(); ++i) {
            const auto rows = static_cast<Index>(t.cluster_sizes[h][i]);
            const auto off = static_cast<Index>(t.cluster_offsets[h][i]);
            Matrix x0(rows, d);
            for (Index r = 0; r < rows; ++r)
                for (Index c = 0; c < d; ++c) x0(r, c) = detail::exp1(rng);
            const Matrix x = x0 / sup_norm(x0);
            t.x_pop.middleRows(off, rows) = x;
            for (std::size_t s = 0; s < spec.layout.block_count(); ++s) {
                const auto width = static_cast<Index>(spec.layout.blocks()[s].columns);
                Matrix w(d, width);
                for (Index r = 0; r < d; ++r)
                    for (Index c = 0; c < width; ++c) w(r, c) = unif02(rng);
                const Matrix zt = x * w;
                t.z_pop.block(off, static_cast<Index>(spec.layout.block_offset(s)), rows, width) = zt / sup_norm(zt);
            }
        }
    }

    std::normal_distribution<double> intercept(spec.xi, 0.1);
    std::normal_distribution<double> slope(0.3, 0.1);
    t.zeta.assign(static_cast<std::size_t>(cols), std::vector<Vector>(h_count));
    for (Index j = 0; j < cols; ++j) {
        for (std::size_t h = 0; h < h_count; ++h) {
            Vector z(d + 1);
            z(0) = intercept(rng);
            for (Index k = 1; k <= d; ++k) z(k) = slope(rng);
            t.zeta[static_cast<std::size_t>(j)][h] = std::move(z);
        }
    }
    return t;
}

inline SyntheticTruth generate_population(const PopulationSpec& spec)
{
    Rng rng(spec.seed);
    return generate_population(spec, rng);
}

/**
 * Stage 1 draws m1 clusters per stratum with replacement, probability
 * proportional to M_hi. Stage 2 draws m2 elements without replacement from
 * each drawn cluster; a cluster drawn twice contributes two independent
 * element samples. Rows come out stratum-major with pi = m1 m2 / N_h.
 * Responses are left missing; see impose_responses_and_missingness.
 */
inline SampledData draw_sample(const SyntheticTruth& truth, const PopulationSpec& spec, Rng& rng)
{
    const std::size_t h_count = truth.stratum_count();
    for (std::size_t h = 0; h < h_count; ++h) {
        if (truth.cluster_sizes[h].size() < spec.m1) {
            throw DesignError("stratum " + std::to_string(h + 1) + " has fewer than m1 clusters");
        }
        for (std::size_t size : truth.cluster_sizes[h]) {
            if (size < spec.m2) throw DesignError("stratum " + std::to_string(h + 1) + " has a cluster smaller than m2");
        }
    }

    std::vector<std::size_t> picked;
    std::vector<std::size_t> strata;
    std::vector<double> pi;
    std::vector<std::size_t> scratch;
    for (std::size_t h = 0; h < h_count; ++h) {
        const auto& sizes = truth.cluster_sizes[h];
        std::discrete_distribution<std::size_t> pps(sizes.begin(), sizes.end());
        const double incl = static_cast<double>(spec.m1 * spec.m2) / static_cast<double>(truth.stratum_sizes[h]);
        for (std::size_t draw = 0; draw < spec.m1; ++draw) {
            const std::size_t c = pps(rng);
            const std::size_t size = sizes[c];
            scratch.resize(size);
            std::iota(scratch.begin(), scratch.end(), std::size_t{0});
            // partial Fisher-Yates: the first m2 slots form the SRSWOR sample
            for (std::size_t k = 0; k < spec.m2; ++k) {
                std::uniform_int_distribution<std::size_t> pick(k, size - 1);
                std::swap(scratch[k], scratch[pick(rng)]);
                picked.push_back(truth.cluster_offsets[h][c] + scratch[k]);
                strata.push_back(h);
                pi.push_back(incl);
            }
        }
    }

    const auto n = static_cast<Index>(picked.size());
    const Index cols = truth.z_pop.cols();
    SampledData out;
    out.population_rows = picked;
    out.truth_z.resize(n, cols);
    Matrix x(n, truth.x_pop.cols());
    for (Index i = 0; i < n; ++i) {
        const auto src = static_cast<Index>(picked[static_cast<std::size_t>(i)]);
        out.truth_z.row(i) = truth.z_pop.row(src);
        x.row(i) = truth.x_pop.row(src);
    }
    Vector pi_vec = Eigen::Map<const Vector>(pi.data(), n);
    out.dataset = MixedDataset::from_observations(Matrix::Constant(n, cols, kNA), std::move(x), std::move(strata),
                                                  std::move(pi_vec), truth.layout,
                                                  static_cast<double>(truth.population_size()));
    out.true_p = Matrix::Zero(n, cols);
    return out;
}

/// Draws y_ij from the block family at z*_ij and r_ij ~ Bernoulli(p_ij) from
/// the stratum's logistic response model; non-responses become missing.
inline SampledData impose_responses_and_missingness(SampledData sample, const SyntheticTruth& truth, Rng& rng)
{
    MixedDataset& data = sample.dataset;
    const Index n = data.rows();
    const Index cols = data.columns();
    const Index d = data.covariate_dim();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Index i = 0; i < n; ++i) {
        const std::size_t h = data.strata[static_cast<std::size_t>(i)];
        for (Index j = 0; j < cols; ++j) {
            const Family& f = truth.layout.family_of(static_cast<std::size_t>(j));
            const double y = draw_response(f, sample.truth_z(i, j), rng);
            const Vector& zeta = truth.zeta[static_cast<std::size_t>(j)][h];
            const double eta = zeta(0) + zeta.tail(d).dot(data.x.row(i).transpose());
            const double p = detail::logistic(eta);
            sample.true_p(i, j) = p;
            const bool respond = unif(rng) < p;
            data.y(i, j) = respond ? y : kNA;
            data.r(i, j) = respond ? 1.0 : 0.0;
        }
    }
    return sample;
}

/// Population, sample and responses from one seed.
inline std::pair<SyntheticTruth, SampledData> simulate(const PopulationSpec& spec, std::uint64_t seed)
{
    Rng rng(seed);
    SyntheticTruth truth = generate_population(spec, rng);
    SampledData sample = draw_sample(truth, spec, rng);
    sample = impose_responses_and_missingness(std::move(sample), truth, rng);
    return {std::move(truth), std::move(sample)};
}

}  // namespace svymc
