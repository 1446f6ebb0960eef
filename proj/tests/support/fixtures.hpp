#pragma once

#include <random>
#include <vector>

#include "svymc/dataset.hpp"
#include "svymc/exp_family.hpp"
#include "svymc/matrix.hpp"
#include "svymc/missing_mechanism.hpp"

namespace fixture {

using namespace svymc;

struct Problem {
    MixedDataset data;
    ResponseProbModel probs;
    Matrix truth;
};

/// Low-rank natural parameters, responses drawn from the layout families,
/// roughly `missing` of the entries removed at random, random design and
/// response probabilities.
inline Problem mixed_problem(Index n, const CategoryLayout& layout, Index d, double missing, std::uint64_t seed,
                             std::size_t strata = 2)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u;
    const auto cols = static_cast<Index>(layout.total_columns());
    Matrix a(n, 2), b(2, cols);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = 0.6 * nd(rng);
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = 0.6 * nd(rng);
    Matrix truth = a * b;
    Matrix y(n, cols);
    for (Index j = 0; j < cols; ++j) {
        const Family& f = layout.family_of(static_cast<std::size_t>(j));
        for (Index i = 0; i < n; ++i) {
            if (f.kind == FamilyKind::exponential) truth(i, j) = -0.5 - std::abs(truth(i, j));
            y(i, j) = u(rng) < missing ? kNA : draw_response(f, truth(i, j), rng);
        }
    }
    Matrix x(n, d);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    std::vector<std::size_t> st(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) st[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i) * strata / static_cast<std::size_t>(n);
    Vector pi(n);
    for (Index i = 0; i < n; ++i) pi(i) = 0.05 + 0.9 * u(rng);
    Problem p{MixedDataset::from_observations(y, x, st, pi, layout, 50.0 * static_cast<double>(n)), {}, truth};
    p.probs = ResponseProbModel::constant(n, cols, 1.0);
    for (Index i = 0; i < p.probs.p_hat.size(); ++i) p.probs.p_hat.data()[i] = 0.2 + 0.8 * u(rng);
    return p;
}

inline CategoryLayout four_families(std::size_t per_block)
{
    return CategoryLayout({{Family::gaussian(), per_block},
                           {Family::poisson(), per_block},
                           {Family::bernoulli(), per_block},
                           {Family::exponential(), per_block}});
}

}  // namespace fixture
