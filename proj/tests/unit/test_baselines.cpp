#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "svymc/baselines.hpp"

using namespace svymc;

TEST(SoftImpute, FullyObservedSolutionIsThresholdedData)
{
    std::mt19937_64 rng(1);
    const Matrix y = oracle::gaussian(12, 6, rng);
    const Matrix r = Matrix::Ones(12, 6);
    const CategoryLayout layout({{Family::gaussian(), 6}});
    const BaselineResult out = soft_impute(y, r, layout, 1.5);
    EXPECT_LT((out.y_imputed - y).norm(), 1e-12);
    EXPECT_LT((out.z_hat_natural - svt(y, 1.5)).norm(), 1e-10);
    EXPECT_TRUE(out.notes.empty());
}

TEST(SoftImpute, ObjectiveDecreasesAndFixedPointHolds)
{
    std::mt19937_64 rng(2);
    const Matrix low = oracle::gaussian(30, 3, rng) * oracle::gaussian(3, 10, rng);
    Matrix y = low + oracle::gaussian(30, 10, rng, 0.1);
    Matrix r = Matrix::Ones(30, 10);
    std::uniform_real_distribution<double> u;
    for (Index i = 0; i < y.size(); ++i) {
        if (u(rng) < 0.3) {
            y.data()[i] = kNA;
            r.data()[i] = 0.0;
        }
    }
    SoftImputeOptions opt;
    opt.max_iter = 2000;
    opt.tol = 1e-9;
    const BaselineResult out = soft_impute(y, r, CategoryLayout({{Family::gaussian(), 10}}), 0.5, opt);
    for (std::size_t k = 1; k < out.objective_trace.size(); ++k) {
        EXPECT_LE(out.objective_trace[k], out.objective_trace[k - 1] + 1e-12);
    }
    const Matrix m = out.z_hat_natural;  // identity link for the gaussian family
    EXPECT_LT((svt(out.y_imputed, 0.5) - m).norm(), 1e-6 * m.norm());
    EXPECT_LT((m - low).norm() / low.norm(), 0.2);
}

TEST(SoftImpute, NaturalScaleUsesInverseLinkOfFit)
{
    const Matrix y = (Matrix(2, 2) << 1, 0, 1, 0).finished();
    const Matrix r = Matrix::Ones(2, 2);
    const CategoryLayout layout({{Family::bernoulli(), 1}, {Family::poisson(), 1}});
    const BaselineResult out = soft_impute(y, r, layout, 0.0);
    EXPECT_NEAR(out.z_hat_natural(0, 0), std::log(0.999 / 0.001), 1e-9);
    EXPECT_NEAR(out.z_hat_natural(0, 1), std::log(1e-3), 1e-9);
    EXPECT_THROW(soft_impute(y, r, layout, -1.0), InvalidInput);
}

TEST(ToNaturalScale, ProjectsIntoClampBox)
{
    const Matrix means = (Matrix(1, 3) << 1e20, 0.25, -5.0).finished();
    const CategoryLayout layout({{Family::poisson(), 1}, {Family::bernoulli(), 1}, {Family::gaussian(), 1}});
    const Matrix z = to_natural_scale(means, layout, 30.0);
    EXPECT_EQ(z(0, 0), 30.0);
    EXPECT_NEAR(z(0, 1), std::log(0.25 / 0.75), 1e-15);
    EXPECT_EQ(z(0, 2), -5.0);
}

TEST(HotDeck, DonorsComeFromSameStratumAndColumn)
{
    Matrix y(6, 2);
    y << 1, 10, kNA, 20, 3, kNA, 100, kNA, kNA, 300, 500, 400;
    Matrix r = y.unaryExpr([](double v) { return is_na(v) ? 0.0 : 1.0; });
    const std::vector<std::size_t> strata{0, 0, 0, 1, 1, 1};
    std::mt19937_64 rng(3);
    const CategoryLayout layout({{Family::gaussian(), 2}});
    for (int k = 0; k < 50; ++k) {
        const BaselineResult out = hot_deck(y, r, strata, layout, rng);
        EXPECT_TRUE(out.y_imputed(1, 0) == 1 || out.y_imputed(1, 0) == 3);
        EXPECT_TRUE(out.y_imputed(2, 1) == 10 || out.y_imputed(2, 1) == 20);
        EXPECT_TRUE(out.y_imputed(3, 1) == 300 || out.y_imputed(3, 1) == 400);
        EXPECT_TRUE(out.y_imputed(4, 0) == 100 || out.y_imputed(4, 0) == 500);
        EXPECT_EQ(out.y_imputed(0, 0), 1);
    }
}

// Pearson chi-square against the uniform donor distribution, 7 donors, 0.1% level.
TEST(HotDeck, DonorChoiceIsUniform)
{
    Matrix y(8, 1);
    y << 1, 2, 3, 4, 5, 6, 7, kNA;
    const Matrix r = y.unaryExpr([](double v) { return is_na(v) ? 0.0 : 1.0; });
    const std::vector<std::size_t> strata(8, 0);
    std::mt19937_64 rng(4);
    std::map<double, int> counts;
    const int draws = 14000;
    const CategoryLayout layout({{Family::gaussian(), 1}});
    for (int k = 0; k < draws; ++k) ++counts[hot_deck(y, r, strata, layout, rng).y_imputed(7, 0)];
    ASSERT_EQ(counts.size(), 7u);
    double chi2 = 0.0;
    const double expected = draws / 7.0;
    for (const auto& [value, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LT(chi2, 22.458);  // chi-square(6) upper 0.1% point
}

TEST(HotDeck, FallsBackToColumnAndFailsOnEmptyColumn)
{
    Matrix y(4, 2);
    y << 1, kNA, 2, kNA, kNA, kNA, kNA, 9;
    const Matrix r = y.unaryExpr([](double v) { return is_na(v) ? 0.0 : 1.0; });
    const std::vector<std::size_t> strata{0, 0, 1, 1};
    std::mt19937_64 rng(5);
    const CategoryLayout layout({{Family::gaussian(), 2}});
    const BaselineResult out = hot_deck(y, r, strata, layout, rng);
    EXPECT_TRUE(out.y_imputed(2, 0) == 1 || out.y_imputed(2, 0) == 2);
    EXPECT_EQ(out.y_imputed(0, 1), 9);
    EXPECT_FALSE(out.notes.empty());

    Matrix empty = y;
    empty.col(1).setConstant(kNA);
    const Matrix r2 = empty.unaryExpr([](double v) { return is_na(v) ? 0.0 : 1.0; });
    EXPECT_THROW(hot_deck(empty, r2, strata, layout, rng), ColumnEmpty);
}

TEST(CollectiveUnweighted, MinimizesPlainPenalizedLikelihood)
{
    const CategoryLayout layout({{Family::gaussian(), 3}, {Family::bernoulli(), 3}});
    const auto p = fixture::mixed_problem(20, layout, 2, 0.3, 6);
    SolverConfig c;
    c.tau = 1e-3;
    c.iterations = 300;
    const BaselineResult out = collective_unweighted(p.data, c);
    const auto naive = [&](const Matrix& z) {
        double loss = 0;
        for (Index i = 0; i < z.rows(); ++i) {
            for (Index j = 0; j < z.cols(); ++j) {
                if (p.data.r(i, j) == 0.0) continue;
                const Family& f = layout.family_of(static_cast<std::size_t>(j));
                loss += -p.data.y(i, j) * z(i, j) + log_partition(f, z(i, j));
            }
        }
        return loss / static_cast<double>(z.size()) + c.tau * oracle::singular_values_jacobi(z).sum();
    };
    EXPECT_NEAR(out.objective_trace.back(), naive(out.z_hat_natural), 1e-10);
    for (std::size_t k = 1; k < out.objective_trace.size(); ++k) {
        EXPECT_LE(out.objective_trace[k], out.objective_trace[k - 1]);
    }
    EXPECT_EQ(out.iterations, 300);
}
