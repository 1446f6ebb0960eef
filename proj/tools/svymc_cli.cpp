// Command-line front end: simulate, fit, impute, tune, benchmark.
//
// Exit codes: 0 success, 2 usage error, 3 data or schema error,
// 4 numerical failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "svymc/svymc.hpp"

namespace fs = std::filesystem;
using namespace svymc;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

// Flattens a JSON object of option values into "--key value" arguments.
std::vector<std::string> config_arguments(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("config '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw SchemaViolation("config '" + path + "' must be a JSON object");
    const auto scalar = [](const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
        if (v.is_number()) return format_double(v.get<double>());
        throw SchemaViolation("config values must be strings, numbers, booleans or arrays");
    };
    std::vector<std::string> args;
    for (const auto& [key, value] : j.items()) {
        if (key == "config") continue;
        const std::string flag = "--" + key;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
        } else if (value.is_array()) {
            std::string joined;
            for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar(v);
            args.push_back(flag);
            args.push_back(joined);
        } else if (!value.is_null()) {
            args.push_back(flag);
            args.push_back(scalar(value));
        }
    }
    return args;
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        if (comma > pos) out.push_back(text.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

void ensure_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::vector<std::string> names_or_default(const std::vector<std::string>& names, Index cols, const char* prefix)
{
    if (static_cast<Index>(names.size()) == cols) return names;
    std::vector<std::string> out;
    for (Index j = 0; j < cols; ++j) out.push_back(prefix + std::to_string(j + 1));
    return out;
}

// Options shared by every subcommand that runs the completion solver.
struct SolverArgs {
    double tau = 1e-3;
    int iterations = 200;
    std::string step_mode = "standard_prox";
    std::string step_rule = "backtracking";
    std::optional<double> step_size;
    std::optional<double> population_size;
    double clamp = 30.0;
    bool early_stop = false;
    double p_floor = 0.01;
    bool design_weighted_response = false;

    void add(CLI::App* app, bool with_tau)
    {
        if (with_tau) app->add_option("--tau", tau, "Nuclear-norm penalty level")->capture_default_str();
        app->add_option("--iterations", iterations, "Solver iterations")->capture_default_str();
        app->add_option("--step-mode", step_mode, "standard_prox or as_printed")
            ->check(CLI::IsMember({"standard_prox", "as_printed"}))
            ->capture_default_str();
        app->add_option("--step-rule", step_rule, "backtracking or global_bound")
            ->check(CLI::IsMember({"backtracking", "global_bound"}))
            ->capture_default_str();
        app->add_option("--step-size", step_size, "Fixed step size (overrides --step-rule)");
        app->add_option("--population-size", population_size, "Population size N (default: from data)");
        app->add_option("--clamp", clamp, "Natural-parameter bound")->capture_default_str();
        app->add_flag("--early-stop", early_stop, "Stop when the objective stalls");
        app->add_option("--p-floor", p_floor, "Lower bound on estimated response probabilities")->capture_default_str();
        app->add_flag("--design-weighted-response", design_weighted_response,
                      "Weight the response-model likelihood by 1/pi");
    }

    SolverConfig solver() const
    {
        SolverConfig c;
        c.tau = tau;
        c.iterations = iterations;
        c.step_mode = step_mode == "as_printed" ? StepMode::as_printed : StepMode::standard_prox;
        c.step_rule = step_rule == "global_bound" ? StepRule::global_bound : StepRule::backtracking;
        c.step_size = step_size;
        c.population_size = population_size;
        c.clamp = clamp;
        c.early_stop = early_stop;
        return c;
    }

    ResponseModelOptions response() const
    {
        ResponseModelOptions r;
        r.p_floor = p_floor;
        r.use_design_weights = design_weighted_response;
        return r;
    }
};

struct SpecArgs {
    std::size_t strata = 9;
    std::size_t m1 = 5;
    std::size_t m2 = 20;
    std::size_t covariates = 3;
    std::string layout = "gaussian:30,poisson:30,bernoulli:30";
    double xi = 0.3;
    std::uint64_t seed = 1;

    void add(CLI::App* app)
    {
        app->add_option("--strata", strata, "Number of strata H")->capture_default_str();
        app->add_option("--m1", m1, "Clusters drawn per stratum")->capture_default_str();
        app->add_option("--m2", m2, "Elements drawn per cluster")->capture_default_str();
        app->add_option("--covariates", covariates, "Covariate dimension D")->capture_default_str();
        app->add_option("--layout", layout, "Response blocks, e.g. gaussian:30,poisson:30")->capture_default_str();
        app->add_option("--xi", xi, "Mean of the response-model intercepts")->capture_default_str();
        app->add_option("--seed", seed, "Random seed")->capture_default_str();
    }

    PopulationSpec spec() const
    {
        PopulationSpec s;
        s.strata = strata;
        s.m1 = m1;
        s.m2 = m2;
        s.covariate_dim = covariates;
        s.layout = parse_layout(layout);
        s.xi = xi;
        s.seed = seed;
        s.validate();
        return s;
    }
};

Provenance solver_provenance(const SolverArgs& a)
{
    return {{"tau", format_double(a.tau)},
            {"iterations", std::to_string(a.iterations)},
            {"step_mode", a.step_mode},
            {"step_rule", a.step_rule}};
}

void write_fit_outputs(const std::string& dir, const MixedDataset& data, const ResponseProbModel& probs,
                       const CompletionResult& fit, const SolverArgs& args)
{
    ensure_dir(dir);
    const Provenance prov = solver_provenance(args);
    const auto names = names_or_default(data.response_names, data.columns(), "y");
    write_matrix_csv(join(dir, "z_hat.csv"), fit.z_hat, names, prov);
    write_matrix_csv(join(dir, "p_hat.csv"), probs.p_hat, names, prov);
    write_trace_csv(join(dir, "trace.csv"), fit, prov);

    const auto& d = fit.diagnostics;
    nlohmann::json summary{{"tau", fit.tau_used},
                           {"iterations_run", fit.iterations_run},
                           {"final_objective", fit.objective_trace.back()},
                           {"final_nuclear_norm", d.final_nuclear_norm},
                           {"rank_estimate", d.rank_estimate},
                           {"clamped_entries", d.clamped_entries},
                           {"rejected_steps", d.rejected_steps},
                           {"backtracks", d.backtracks},
                           {"final_step", d.final_step},
                           {"degenerate_response_cells", probs.degenerate_cells()},
                           {"separation_response_cells", probs.separation_cells()}};
    std::ofstream out(join(dir, "fit.json"));
    if (!out) throw IoError("cannot write fit summary in '" + dir + "'");
    out << summary.dump(2) << '\n';
}

int run_simulate(const SpecArgs& args, const std::string& out_dir)
{
    const PopulationSpec spec = args.spec();
    const auto [truth, sample] = simulate(spec, args.seed);
    ensure_dir(out_dir);
    save_dataset(sample.dataset, join(out_dir, "data.csv"), join(out_dir, "schema.json"));
    const Provenance prov{{"seed", std::to_string(args.seed)}, {"xi", format_double(args.xi)}};
    const auto names = names_or_default(sample.dataset.response_names, sample.dataset.columns(), "y");
    write_matrix_csv(join(out_dir, "true_z.csv"), sample.truth_z, names, prov);
    write_matrix_csv(join(out_dir, "true_p.csv"), sample.true_p, names, prov);
    std::cout << "simulated n=" << sample.dataset.rows() << " L=" << sample.dataset.columns()
              << " N=" << truth.population_size() << " response_rate=" << sample.dataset.response_rate() << '\n';
    return 0;
}

int run_fit(const std::string& data_path, const std::string& schema_path, const std::string& out_dir,
            const SolverArgs& args)
{
    const MixedDataset data = load_dataset(data_path, schema_path);
    const ResponseProbModel probs = estimate_response_probs(data, args.response());
    const CompletionResult fit = run_mmcshm(data, probs, args.solver());
    write_fit_outputs(out_dir, data, probs, fit, args);
    std::cout << "objective " << format_double(fit.objective_trace.front()) << " -> "
              << format_double(fit.objective_trace.back()) << " after " << fit.iterations_run
              << " iterations, rank " << fit.diagnostics.rank_estimate << '\n';
    return 0;
}

int run_impute(const std::string& data_path, const std::string& schema_path, const std::string& output,
               const std::optional<std::string>& z_hat_path, bool original_scale, const SolverArgs& args)
{
    const MixedDataset data = load_dataset(data_path, schema_path);
    Matrix z_hat;
    if (z_hat_path) {
        z_hat = read_matrix_csv(*z_hat_path);
        if (z_hat.rows() != data.rows() || z_hat.cols() != data.columns()) {
            throw ShapeError("z_hat file has shape " + std::to_string(z_hat.rows()) + "x" +
                             std::to_string(z_hat.cols()) + ", data is " + std::to_string(data.rows()) + "x" +
                             std::to_string(data.columns()));
        }
    } else {
        const ResponseProbModel probs = estimate_response_probs(data, args.response());
        z_hat = run_mmcshm(data, probs, args.solver()).z_hat;
    }
    Matrix filled = impute_means(data, z_hat);
    if (original_scale) {
        for (Index j = 0; j < filled.cols(); ++j) {
            const auto& t = data.response_transforms[static_cast<std::size_t>(j)];
            for (Index i = 0; i < filled.rows(); ++i) filled(i, j) = t.inverse(filled(i, j));
        }
    }
    if (const auto parent = fs::path(output).parent_path(); !parent.empty()) ensure_dir(parent.string());
    write_matrix_csv(output, filled, names_or_default(data.response_names, data.columns(), "y"),
                     {{"scale", original_scale ? "original" : "model"}});
    std::cout << "imputed " << (1.0 - data.response_rate()) * static_cast<double>(data.r.size()) << " entries\n";
    return 0;
}

int run_tune(const std::string& data_path, const std::string& schema_path, const std::string& grid_text,
             int folds, std::uint64_t seed, const std::optional<std::string>& truth_path,
             const std::optional<std::string>& output, const SolverArgs& args)
{
    const MixedDataset data = load_dataset(data_path, schema_path);
    const ResponseProbModel probs = estimate_response_probs(data, args.response());
    const std::vector<double> grid = parse_grid(grid_text);
    TuneProtocol protocol = KFold{folds, seed};
    if (truth_path) protocol = ValidationSet{read_matrix_csv(*truth_path)};
    const TuneResult result = tune_tau(data, probs, data.x, grid, protocol, args.solver());
    if (output) {
        if (const auto parent = fs::path(*output).parent_path(); !parent.empty()) ensure_dir(parent.string());
        write_tune_csv(*output, result,
                       {{"protocol", truth_path ? "validation" : "kfold"}, {"grid", grid_text}});
    }
    for (const auto& s : result.scores) std::cout << format_double(s.tau) << '\t' << format_double(s.score) << '\n';
    std::cout << "best_tau " << format_double(result.best_tau) << '\n';
    return 0;
}

struct BenchArgs {
    std::size_t replicates = 20;
    std::string methods = "proposed,collective_unweighted,soft_impute,hot_deck";
    std::optional<double> tau_proposed;
    std::optional<double> tau_collective;
    std::optional<double> tau_soft_impute;
    bool tune = false;
    std::string grid = "2^-15..2^-1,1,2";
    std::string soft_grid = "2^-2..2^8";
    std::string out_dir;
    std::string scenario;
};

int run_bench(const SpecArgs& spec_args, const SolverArgs& solver_args, const BenchArgs& args, std::size_t threads)
{
    BenchmarkConfig config;
    config.spec = spec_args.spec();
    config.base_seed = spec_args.seed;
    config.replicates = args.replicates;
    config.solver = solver_args.solver();
    config.response = solver_args.response();
    config.threads = threads;
    config.scenario = args.scenario;
    config.methods.clear();
    for (const auto& name : split_list(args.methods)) config.methods.push_back(parse_method(name));

    const std::map<Method, std::optional<double>> given{{Method::proposed, args.tau_proposed},
                                                        {Method::collective_unweighted, args.tau_collective},
                                                        {Method::soft_impute, args.tau_soft_impute}};
    for (const auto& [m, tau] : given)
        if (tau) config.taus[m] = *tau;

    Provenance prov{{"base_seed", std::to_string(spec_args.seed)},
                    {"replicates", std::to_string(args.replicates)},
                    {"iterations", std::to_string(solver_args.iterations)}};
    if (args.tune) {
        std::map<Method, std::vector<double>> grids;
        grids[Method::proposed] = parse_grid(args.grid);
        grids[Method::collective_unweighted] = parse_grid(args.grid);
        grids[Method::soft_impute] = parse_grid(args.soft_grid);
        BenchmarkConfig to_tune = config;
        to_tune.methods.clear();
        for (Method m : config.methods)
            if (method_uses_tau(m) && !config.taus.count(m)) to_tune.methods.push_back(m);
        for (const auto& [m, result] : tune_benchmark_taus(to_tune, grids)) {
            config.taus[m] = result.best_tau;
            std::cout << "tuned " << method_name(m) << " tau=" << format_double(result.best_tau) << '\n';
        }
    }
    for (Method m : config.methods) {
        if (method_uses_tau(m)) {
            if (!config.taus.count(m)) {
                throw InvalidInput("no tau for " + std::string(method_name(m)) + "; pass --tune or --tau-*");
            }
            prov.emplace_back("tau_" + std::string(method_name(m)), format_double(config.taus[m]));
        }
    }

    const BenchmarkSummary summary = run_benchmark(config);
    ensure_dir(args.out_dir);
    write_benchmark_summary_csv(join(args.out_dir, "summary.csv"), summary, prov);
    write_benchmark_replicates_csv(join(args.out_dir, "replicates.csv"), summary, prov);
    for (const auto& row : summary.rows) {
        std::cout << method_name(row.method) << '\t' << row.block << '\t' << format_double(row.mean) << " +- "
                  << format_double(row.se) << "\tfailures=" << row.failures << '\n';
    }
    return 0;
}

// Inserts the arguments of --config files right after the subcommand name so
// explicit command-line values, which come later, take precedence.
std::vector<std::string> expand_config(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> rest;
    std::optional<std::string> config;
    for (std::size_t k = 0; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size()) {
            config = args[++k];
        } else if (args[k].rfind("--config=", 0) == 0) {
            config = args[k].substr(9);
        } else {
            rest.push_back(args[k]);
        }
    }
    if (!config) return rest;
    const auto extra = config_arguments(*config);
    std::size_t at = 0;
    while (at < rest.size() && rest[at].rfind("-", 0) == 0) ++at;  // global flags before the subcommand
    if (at < rest.size()) ++at;
    rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(at), extra.begin(), extra.end());
    return rest;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Mixed-type matrix completion for complex survey data"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.fallthrough();
    std::size_t threads = 1;
    std::string config_path;
    app.add_option("--threads", threads, "Worker threads for benchmark replicates")->capture_default_str();
    app.add_option("--config", config_path, "JSON file of option values; command-line values override");

    SpecArgs spec_args;
    SolverArgs solver_args;
    std::string data_path, schema_path, out_dir, output, grid_text = "2^-15..2^-1,1,2";
    std::optional<std::string> z_hat_path, truth_path, tune_output;
    bool original_scale = false;
    int folds = 5;
    std::uint64_t fold_seed = 1;
    BenchArgs bench;

    auto* sim = app.add_subcommand("simulate", "Draw a synthetic population, sample and responses");
    spec_args.add(sim);
    sim->add_option("--out-dir", out_dir, "Output directory")->required();

    auto* fit = app.add_subcommand("fit", "Estimate response probabilities and complete the matrix");
    fit->add_option("--data", data_path, "Data CSV")->required();
    fit->add_option("--schema", schema_path, "Schema JSON")->required();
    fit->add_option("--out-dir", out_dir, "Output directory")->required();
    solver_args.add(fit, true);

    auto* imp = app.add_subcommand("impute", "Fill missing responses with fitted means");
    imp->add_option("--data", data_path, "Data CSV")->required();
    imp->add_option("--schema", schema_path, "Schema JSON")->required();
    imp->add_option("--output", output, "Output CSV")->required();
    imp->add_option("--z-hat", z_hat_path, "Reuse a fitted natural-parameter matrix");
    imp->add_flag("--original-scale", original_scale, "Undo load-time standardization");
    solver_args.add(imp, true);

    auto* tune = app.add_subcommand("tune", "Select tau over a grid");
    tune->add_option("--data", data_path, "Data CSV")->required();
    tune->add_option("--schema", schema_path, "Schema JSON")->required();
    tune->add_option("--grid", grid_text, "Grid, e.g. 2^-15..2^-1,1,2")->capture_default_str();
    tune->add_option("--folds", folds, "Number of folds")->capture_default_str();
    tune->add_option("--fold-seed", fold_seed, "Seed of the fold assignment")->capture_default_str();
    tune->add_option("--truth", truth_path, "True natural parameters; scores by relative error instead of k-fold");
    tune->add_option("--output", tune_output, "Score table CSV");
    solver_args.add(tune, false);

    auto* bm = app.add_subcommand("benchmark", "Monte Carlo comparison against baseline methods");
    spec_args.add(bm);
    solver_args.add(bm, false);
    bm->add_option("--replicates", bench.replicates, "Monte Carlo replicates")->capture_default_str();
    bm->add_option("--methods", bench.methods, "Comma-separated methods")->capture_default_str();
    bm->add_option("--tau-proposed", bench.tau_proposed, "Tau of the proposed method");
    bm->add_option("--tau-collective", bench.tau_collective, "Tau of the unweighted collective baseline");
    bm->add_option("--tau-soft-impute", bench.tau_soft_impute, "Tau of Soft-Impute");
    bm->add_flag("--tune", bench.tune, "Tune missing taus on a separate validation replicate");
    bm->add_option("--grid", bench.grid, "Tau grid for solver-based methods")->capture_default_str();
    bm->add_option("--soft-grid", bench.soft_grid, "Tau grid for Soft-Impute")->capture_default_str();
    bm->add_option("--scenario", bench.scenario, "Scenario label in the summary");
    bm->add_option("--out-dir", bench.out_dir, "Output directory")->required();

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*sim) return run_simulate(spec_args, out_dir);
        if (*fit) return run_fit(data_path, schema_path, out_dir, solver_args);
        if (*imp) return run_impute(data_path, schema_path, output, z_hat_path, original_scale, solver_args);
        if (*tune) {
            return run_tune(data_path, schema_path, grid_text, folds, fold_seed, truth_path, tune_output,
                            solver_args);
        }
        if (*bm) return run_bench(spec_args, solver_args, bench, threads);
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DomainError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
