#pragma once

// Monte Carlo comparison of the proposed estimator against the baselines on
// simulated survey data, scored by relative error against the true natural
// parameters.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "svymc/baselines.hpp"
#include "svymc/metrics.hpp"
#include "svymc/missing_mechanism.hpp"
#include "svymc/simulator.hpp"
#include "svymc/solver.hpp"
#include "svymc/tuning.hpp"

namespace svymc {

enum class Method { proposed, collective_unweighted, soft_impute, hot_deck };

inline std::string_view method_name(Method m)
{
    switch (m) {
        case Method::proposed: return "proposed";
        case Method::collective_unweighted: return "collective_unweighted";
        case Method::soft_impute: return "soft_impute";
        case Method::hot_deck: return "hot_deck";
    }
    return "unknown";
}

inline Method parse_method(std::string_view name)
{
    for (Method m : {Method::proposed, Method::collective_unweighted, Method::soft_impute, Method::hot_deck}) {
        if (method_name(m) == name) return m;
    }
    throw InvalidInput("unknown method '" + std::string(name) + "'");
}

inline bool method_uses_tau(Method m) { return m != Method::hot_deck; }

struct BenchmarkConfig {
    PopulationSpec spec;
    std::vector<Method> methods{Method::proposed, Method::collective_unweighted, Method::soft_impute,
                                Method::hot_deck};
    std::size_t replicates = 20;
    std::map<Method, double> taus;
    std::uint64_t base_seed = 1;
    SolverConfig solver;  // tau is taken from `taus`
    SoftImputeOptions soft_impute;
    ResponseModelOptions response;
    std::size_t threads = 1;
    std::string scenario;  // label in the summary; defaults to "xi=<xi>"

    std::string scenario_label() const
    {
        if (!scenario.empty()) return scenario;
        char buf[64];
        std::snprintf(buf, sizeof buf, "xi=%g", spec.xi);
        return buf;
    }
};

struct MethodOutcome {
    Method method = Method::proposed;
    bool failed = false;
    std::string error;
    double overall = 0.0;
    std::vector<double> blocks;
    double overall_mean_scale = 0.0;
    std::vector<double> objective_trace;  // solver-based methods only
};

struct ReplicationReport {
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    double response_rate = 0.0;
    std::vector<MethodOutcome> outcomes;
    double wall_seconds = 0.0;
};

struct SummaryRow {
    Method method = Method::proposed;
    std::string block;  // "overall", a block label, or "overall_mean_scale"
    double mean = 0.0;
    double se = 0.0;
    std::size_t replicates = 0;
    std::size_t failures = 0;
};

struct BenchmarkSummary {
    BenchmarkConfig config;
    std::vector<SummaryRow> rows;
    std::vector<ReplicationReport> reports;  // in replicate order

    const SummaryRow& row(Method m, std::string_view block = "overall") const
    {
        for (const auto& r : rows)
            if (r.method == m && r.block == block) return r;
        throw InvalidInput("summary has no row for " + std::string(method_name(m)) + "/" + std::string(block));
    }
};

namespace detail {

inline Rng method_rng(std::uint64_t seed) { return Rng(seed ^ 0x9E3779B97F4A7C15ULL); }

// Mean and standard error (sample SD / sqrt(R)); values are summed in sorted
// order so the result does not depend on replicate order.
inline std::pair<double, double> mean_se(std::vector<double> v)
{
    if (v.empty()) return {std::nan(""), std::nan("")};
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace detail

/// Natural-parameter estimate of one method on one simulated sample.
struct MethodFit {
    Matrix z_hat;
    std::vector<double> objective_trace;
};

inline MethodFit fit_method(Method method, const MixedDataset& data, double tau, const BenchmarkConfig& config,
                            Rng& rng)
{
    switch (method) {
        case Method::proposed: {
            const auto probs = estimate_response_probs(data, config.response);
            SolverConfig sc = config.solver;
            sc.tau = tau;
            auto fit = run_mmcshm(data, probs, sc);
            return {std::move(fit.z_hat), std::move(fit.objective_trace)};
        }
        case Method::collective_unweighted: {
            SolverConfig sc = config.solver;
            sc.tau = tau;
            auto fit = collective_unweighted(data, sc);
            return {std::move(fit.z_hat_natural), std::move(fit.objective_trace)};
        }
        case Method::soft_impute: {
            auto fit = soft_impute(data.y, data.r, data.layout, tau, config.soft_impute);
            return {std::move(fit.z_hat_natural), {}};
        }
        case Method::hot_deck: {
            auto fit = hot_deck(data.y, data.r, data.strata, data.layout, rng, config.solver.clamp);
            return {std::move(fit.z_hat_natural), {}};
        }
    }
    throw InvalidInput("unknown method");
}

inline double tau_for(const BenchmarkConfig& config, Method m)
{
    if (!method_uses_tau(m)) return 0.0;
    const auto it = config.taus.find(m);
    if (it == config.taus.end()) {
        throw InvalidInput("no tau configured for method " + std::string(method_name(m)));
    }
    return it->second;
}

/// One replicate: fresh population, sample and responses from the derived seed.
inline ReplicationReport run_replicate(const BenchmarkConfig& config, std::size_t replicate)
{
    const auto start = std::chrono::steady_clock::now();
    ReplicationReport rep;
    rep.replicate = replicate;
    rep.seed = replicate_seed(config.base_seed, replicate);
    const auto [truth, sample] = simulate(config.spec, rep.seed);
    const MixedDataset& data = sample.dataset;
    rep.response_rate = data.response_rate();
    Rng rng = detail::method_rng(rep.seed);
    const Matrix truth_mean = mean_scale(data.layout, sample.truth_z);

    for (Method m : config.methods) {
        MethodOutcome out;
        out.method = m;
        try {
            MethodFit fit = fit_method(m, data, tau_for(config, m), config, rng);
            out.overall = relative_error(fit.z_hat, sample.truth_z);
            out.blocks = block_relative_errors(fit.z_hat, sample.truth_z, data.layout);
            out.overall_mean_scale = relative_error(mean_scale(data.layout, fit.z_hat), truth_mean);
            out.objective_trace = std::move(fit.objective_trace);
            if (!std::isfinite(out.overall)) throw NumericalFailure("non-finite relative error");
        } catch (const std::exception& e) {
            out.failed = true;
            out.error = e.what();
        }
        rep.outcomes.push_back(std::move(out));
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

inline std::vector<SummaryRow> summarize(const BenchmarkConfig& config, const std::vector<ReplicationReport>& reports)
{
    std::vector<SummaryRow> rows;
    const CategoryLayout& layout = config.spec.layout;
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        const Method m = config.methods[mi];
        std::vector<std::string> labels{"overall"};
        for (std::size_t s = 0; s < layout.block_count(); ++s) labels.push_back(block_label(layout, s));
        labels.push_back("overall_mean_scale");
        std::vector<std::vector<double>> values(labels.size());
        std::size_t failures = 0;
        for (const auto& rep : reports) {
            const auto& o = rep.outcomes[mi];
            if (o.failed) {
                ++failures;
                continue;
            }
            values[0].push_back(o.overall);
            for (std::size_t s = 0; s < o.blocks.size(); ++s) values[s + 1].push_back(o.blocks[s]);
            values.back().push_back(o.overall_mean_scale);
        }
        for (std::size_t b = 0; b < labels.size(); ++b) {
            const auto [mean, se] = detail::mean_se(values[b]);
            rows.push_back({m, labels[b], mean, se, values[b].size(), failures});
        }
    }
    return rows;
}

/**
 * Runs `replicates` independent replicates (in parallel when threads > 1) and
 * aggregates per-method means with one-standard-error bars. The output only
 * depends on the configuration and base seed.
 */
inline BenchmarkSummary run_benchmark(const BenchmarkConfig& config)
{
    if (config.replicates < 2) throw InvalidInput("benchmark: at least 2 replicates are required");
    if (config.methods.empty()) throw InvalidInput("benchmark: no methods selected");
    for (Method m : config.methods) (void)tau_for(config, m);
    config.spec.validate();

    BenchmarkSummary summary;
    summary.config = config;
    summary.reports.resize(config.replicates);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t r = next++; r < config.replicates; r = next++) summary.reports[r] = run_replicate(config, r);
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(config.threads, config.replicates));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    summary.rows = summarize(config, summary.reports);
    return summary;
}

/// Seed of the validation replicate used for tuning; disjoint from replicate seeds.
inline std::uint64_t validation_seed(std::uint64_t base_seed) { return base_seed ^ (std::uint64_t{1} << 40); }

inline std::vector<double> default_grid(Method m)
{
    if (m == Method::soft_impute) return parse_grid("2^-2..2^8");
    return default_tau_grid();
}

/**
 * Tunes tau for every tau-using method on one independently generated
 * validation replicate, scoring RE against its true parameters. The chosen
 * values are meant to be held fixed across the Monte Carlo replicates.
 */
inline std::map<Method, TuneResult> tune_benchmark_taus(const BenchmarkConfig& config,
                                                        const std::map<Method, std::vector<double>>& grids = {})
{
    const auto seed = validation_seed(config.base_seed);
    const auto [truth, sample] = simulate(config.spec, seed);
    const MixedDataset& data = sample.dataset;
    std::map<Method, TuneResult> out;
    for (Method m : config.methods) {
        if (!method_uses_tau(m)) continue;
        const auto it = grids.find(m);
        const std::vector<double> grid = it != grids.end() ? it->second : default_grid(m);
        out[m] = select_tau(grid, [&](double tau) {
            Rng rng = detail::method_rng(seed);
            return relative_error(fit_method(m, data, tau, config, rng).z_hat, sample.truth_z);
        });
    }
    return out;
}

}  // namespace svymc
