#pragma once

// Schema-driven CSV ingestion of survey data frames and CSV export of fits,
// traces, score tables and benchmark summaries.
//
// Numbers are written with 17 significant digits via std::to_chars and parsed
// with std::from_chars, so the text form is locale independent and round
// trips exactly. Lines starting with '#' are provenance comments and are
// skipped on input.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "svymc/benchmark.hpp"
#include "svymc/dataset.hpp"
#include "svymc/errors.hpp"
#include "svymc/exp_family.hpp"
#include "svymc/matrix.hpp"
#include "svymc/solver.hpp"
#include "svymc/tuning.hpp"

namespace svymc {

/// File could not be opened, read or written.
class IoError : public Error { using Error::Error; };

using Provenance = std::vector<std::pair<std::string, std::string>>;

inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view text)
{
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

// ---------------------------------------------------------------------------
// CSV primitives

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    Provenance provenance;
};

inline std::vector<std::string> split_csv_line(std::string_view line, char delim)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cur.push_back('"');
                ++k;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline CsvTable read_csv(const std::string& path, char delim = ',')
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto body = std::string_view(line).substr(1);
            const auto eq = body.find('=');
            if (eq != std::string_view::npos) {
                auto key = body.substr(0, eq);
                while (!key.empty() && key.front() == ' ') key.remove_prefix(1);
                t.provenance.emplace_back(std::string(key), std::string(body.substr(eq + 1)));
            }
            continue;
        }
        auto fields = split_csv_line(line, delim);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
        } else {
            if (fields.size() != t.header.size()) {
                throw SchemaViolation("'" + path + "' row " + std::to_string(t.rows.size() + 1) + " has " +
                                      std::to_string(fields.size()) + " fields, expected " +
                                      std::to_string(t.header.size()));
            }
            t.rows.push_back(std::move(fields));
        }
    }
    if (!have_header) throw SchemaViolation("'" + path + "' has no header row");
    return t;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const Provenance& provenance = {}, char delim = ',')
        : out_(path), delim_(delim), path_(path)
    {
        if (!out_) throw IoError("cannot open '" + path + "' for writing");
        for (const auto& [k, v] : provenance) out_ << "# " << k << '=' << v << '\n';
    }

    CsvWriter& row(const std::vector<std::string>& fields)
    {
        for (std::size_t k = 0; k < fields.size(); ++k) {
            if (k) out_ << delim_;
            out_ << quote(fields[k]);
        }
        out_ << '\n';
        if (!out_) throw IoError("write to '" + path_ + "' failed");
        return *this;
    }

private:
    std::string quote(const std::string& f) const
    {
        if (f.find(delim_) == std::string::npos && f.find('"') == std::string::npos) return f;
        std::string q = "\"";
        for (char c : f) {
            if (c == '"') q.push_back('"');
            q.push_back(c);
        }
        return q + "\"";
    }

    std::ofstream out_;
    char delim_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Schema

enum class ColumnRole { covariate, response, stratum, weight };

struct SchemaColumn {
    std::string name;
    ColumnRole role = ColumnRole::covariate;
    Family family;                       // responses only
    std::optional<ColumnTransform> transform;  // values in the file are already transformed
};

struct Schema {
    std::vector<SchemaColumn> columns;
    std::string na_marker = "NA";
    char delimiter = ',';
    bool standardize = false;
    std::optional<double> population_size;

    void validate() const
    {
        std::size_t cov = 0, resp = 0, strat = 0, weight = 0;
        std::vector<Family> seen_blocks;
        std::optional<Family> current;
        for (const auto& c : columns) {
            switch (c.role) {
                case ColumnRole::covariate: ++cov; break;
                case ColumnRole::stratum: ++strat; break;
                case ColumnRole::weight: ++weight; break;
                case ColumnRole::response:
                    ++resp;
                    if (!current || !(*current == c.family)) {
                        for (const auto& f : seen_blocks) {
                            if (f == c.family) {
                                throw SchemaViolation("schema: response columns of family " +
                                                      std::string(family_name(c.family)) + " are not contiguous");
                            }
                        }
                        seen_blocks.push_back(c.family);
                        current = c.family;
                    }
                    break;
            }
        }
        if (strat != 1) throw SchemaViolation("schema: exactly one stratum column is required");
        if (weight != 1) throw SchemaViolation("schema: exactly one weight column is required");
        if (cov < 1) throw SchemaViolation("schema: at least one covariate column is required");
        if (resp < 1) throw SchemaViolation("schema: at least one response column is required");
    }

    CategoryLayout layout() const
    {
        std::vector<CategoryLayout::Block> blocks;
        for (const auto& c : columns) {
            if (c.role != ColumnRole::response) continue;
            if (blocks.empty() || !(blocks.back().family == c.family)) blocks.push_back({c.family, 0});
            ++blocks.back().columns;
        }
        return CategoryLayout(std::move(blocks));
    }
};

inline std::string_view role_name(ColumnRole r)
{
    switch (r) {
        case ColumnRole::covariate: return "covariate";
        case ColumnRole::response: return "response";
        case ColumnRole::stratum: return "stratum";
        case ColumnRole::weight: return "weight";
    }
    return "unknown";
}

inline Schema parse_schema(const nlohmann::json& j)
{
    Schema s;
    try {
        if (!j.is_object()) throw SchemaViolation("schema: top level must be an object");
        s.na_marker = j.value("na", std::string("NA"));
        const std::string delim = j.value("delimiter", std::string(","));
        if (delim.size() != 1) throw SchemaViolation("schema: delimiter must be a single character");
        s.delimiter = delim[0];
        s.standardize = j.value("standardize", false);
        if (j.contains("population_size") && !j["population_size"].is_null()) {
            s.population_size = j["population_size"].get<double>();
        }
        if (!j.contains("columns") || !j["columns"].is_array()) throw SchemaViolation("schema: missing 'columns' array");
        for (const auto& c : j["columns"]) {
            SchemaColumn col;
            col.name = c.at("name").get<std::string>();
            const std::string role = c.at("role").get<std::string>();
            if (role == "covariate") col.role = ColumnRole::covariate;
            else if (role == "response") col.role = ColumnRole::response;
            else if (role == "stratum") col.role = ColumnRole::stratum;
            else if (role == "weight") col.role = ColumnRole::weight;
            else throw SchemaViolation("schema: column '" + col.name + "' has unknown role '" + role + "'");
            if (col.role == ColumnRole::response) {
                const std::string fam = c.at("family").get<std::string>();
                try {
                    col.family = parse_family(fam, c.value("sigma", 1.0));
                } catch (const InvalidInput& e) {
                    throw SchemaViolation("schema: column '" + col.name + "': " + e.what());
                }
            }
            if (c.contains("center") || c.contains("scale")) {
                col.transform = ColumnTransform{c.value("center", 0.0), c.value("scale", 1.0)};
            }
            s.columns.push_back(std::move(col));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation(std::string("schema: ") + e.what());
    }
    s.validate();
    return s;
}

inline Schema read_schema(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("schema '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_schema(j);
}

inline nlohmann::json schema_to_json(const Schema& s)
{
    nlohmann::json j;
    j["delimiter"] = std::string(1, s.delimiter);
    j["na"] = s.na_marker;
    j["standardize"] = s.standardize;
    if (s.population_size) j["population_size"] = *s.population_size;
    j["columns"] = nlohmann::json::array();
    for (const auto& c : s.columns) {
        nlohmann::json col{{"name", c.name}, {"role", std::string(role_name(c.role))}};
        if (c.role == ColumnRole::response) {
            col["family"] = std::string(family_name(c.family));
            if (c.family.kind == FamilyKind::gaussian) col["sigma"] = c.family.sigma;
        }
        if (c.transform) {
            col["center"] = c.transform->center;
            col["scale"] = c.transform->scale;
        }
        j["columns"].push_back(std::move(col));
    }
    return j;
}

// ---------------------------------------------------------------------------
// Datasets

namespace detail {

inline ColumnTransform standardizing_transform(const Matrix& m, Index col)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (Index i = 0; i < m.rows(); ++i) {
        if (!is_na(m(i, col))) {
            sum += m(i, col);
            ++n;
        }
    }
    if (n < 2) return {};
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (Index i = 0; i < m.rows(); ++i)
        if (!is_na(m(i, col))) ss += (m(i, col) - mean) * (m(i, col) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return {mean, sd > 0.0 ? sd : 1.0};
}

inline void apply_transform(Matrix& m, Index col, const ColumnTransform& t)
{
    for (Index i = 0; i < m.rows(); ++i)
        if (!is_na(m(i, col))) m(i, col) = t.forward(m(i, col));
}

}  // namespace detail

/**
 * Loads a data frame according to its schema. Columns are matched by name.
 * Strata are relabelled 0..H-1 in order of first appearance. With
 * "standardize": true, gaussian responses and covariates are centred and
 * scaled by their observed mean and SD; the transforms are retained.
 */
inline MixedDataset load_dataset(const std::string& data_path, const std::string& schema_path)
{
    const Schema schema = read_schema(schema_path);
    const CsvTable table = read_csv(data_path, schema.delimiter);
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < table.header.size(); ++k) index[table.header[k]] = k;
    const auto column_of = [&](const std::string& name) {
        const auto it = index.find(name);
        if (it == index.end()) throw SchemaViolation("data file '" + data_path + "' has no column '" + name + "'");
        return it->second;
    };

    const auto n = static_cast<Index>(table.rows.size());
    if (n == 0) throw SchemaViolation("data file '" + data_path + "' has no rows");
    std::vector<const SchemaColumn*> covs, resps;
    const SchemaColumn* stratum = nullptr;
    const SchemaColumn* weight = nullptr;
    for (const auto& c : schema.columns) {
        if (c.role == ColumnRole::covariate) covs.push_back(&c);
        if (c.role == ColumnRole::response) resps.push_back(&c);
        if (c.role == ColumnRole::stratum) stratum = &c;
        if (c.role == ColumnRole::weight) weight = &c;
    }

    MixedDataset d;
    d.layout = schema.layout();
    d.population_size = schema.population_size;
    d.x.resize(n, static_cast<Index>(covs.size()));
    d.y.resize(n, static_cast<Index>(resps.size()));
    d.r.resize(n, static_cast<Index>(resps.size()));
    d.pi.resize(n);
    d.strata.resize(static_cast<std::size_t>(n));

    const auto cell = [&](Index row, const SchemaColumn& c) -> const std::string& {
        return table.rows[static_cast<std::size_t>(row)][column_of(c.name)];
    };
    const auto where = [&](Index row, const SchemaColumn& c) {
        return "row " + std::to_string(row + 1) + ", column '" + c.name + "'";
    };

    for (std::size_t k = 0; k < covs.size(); ++k) {
        d.covariate_names.push_back(covs[k]->name);
        for (Index i = 0; i < n; ++i) {
            const auto& text = cell(i, *covs[k]);
            const auto v = text == schema.na_marker ? std::nullopt : parse_double(text);
            if (!v || !std::isfinite(*v)) throw SchemaViolation("missing or invalid covariate at " + where(i, *covs[k]));
            d.x(i, static_cast<Index>(k)) = *v;
        }
    }
    for (std::size_t k = 0; k < resps.size(); ++k) {
        d.response_names.push_back(resps[k]->name);
        for (Index i = 0; i < n; ++i) {
            const auto& text = cell(i, *resps[k]);
            if (text == schema.na_marker || text.empty()) {
                d.y(i, static_cast<Index>(k)) = kNA;
                d.r(i, static_cast<Index>(k)) = 0.0;
                continue;
            }
            const auto v = parse_double(text);
            if (!v || !std::isfinite(*v)) throw SchemaViolation("invalid response value at " + where(i, *resps[k]));
            d.y(i, static_cast<Index>(k)) = *v;
            d.r(i, static_cast<Index>(k)) = 1.0;
        }
    }
    std::map<std::string, std::size_t> labels;
    for (Index i = 0; i < n; ++i) {
        const auto& text = cell(i, *stratum);
        if (text.empty() || text == schema.na_marker) throw SchemaViolation("missing stratum at " + where(i, *stratum));
        auto [it, inserted] = labels.emplace(text, labels.size());
        if (inserted) d.stratum_labels.push_back(text);
        d.strata[static_cast<std::size_t>(i)] = it->second;

        const auto& wtext = cell(i, *weight);
        const auto w = parse_double(wtext);
        if (!w || !(*w > 0.0 && *w <= 1.0)) {
            throw WeightError("inclusion probability at " + where(i, *weight) + " must lie in (0, 1], got '" + wtext + "'");
        }
        d.pi(i) = *w;
    }

    d.fill_default_names();
    for (std::size_t k = 0; k < covs.size(); ++k) {
        const auto col = static_cast<Index>(k);
        if (covs[k]->transform) {
            d.covariate_transforms[k] = *covs[k]->transform;
        } else if (schema.standardize) {
            d.covariate_transforms[k] = detail::standardizing_transform(d.x, col);
            detail::apply_transform(d.x, col, d.covariate_transforms[k]);
        }
    }
    for (std::size_t k = 0; k < resps.size(); ++k) {
        const auto col = static_cast<Index>(k);
        if (resps[k]->transform) {
            d.response_transforms[k] = *resps[k]->transform;
        } else if (schema.standardize && resps[k]->family.kind == FamilyKind::gaussian) {
            d.response_transforms[k] = detail::standardizing_transform(d.y, col);
            detail::apply_transform(d.y, col, d.response_transforms[k]);
        }
    }
    d.validate();
    return d;
}

/// Schema describing a dataset as save_dataset writes it.
inline Schema schema_for(const MixedDataset& d, const std::string& na_marker = "NA")
{
    Schema s;
    s.na_marker = na_marker;
    s.population_size = d.population_size;
    for (Index k = 0; k < d.covariate_dim(); ++k) {
        SchemaColumn c{d.covariate_names[static_cast<std::size_t>(k)], ColumnRole::covariate, {}, std::nullopt};
        const auto& t = d.covariate_transforms[static_cast<std::size_t>(k)];
        if (!t.is_identity()) c.transform = t;
        s.columns.push_back(std::move(c));
    }
    for (Index k = 0; k < d.columns(); ++k) {
        SchemaColumn c{d.response_names[static_cast<std::size_t>(k)], ColumnRole::response,
                       d.layout.family_of(static_cast<std::size_t>(k)), std::nullopt};
        const auto& t = d.response_transforms[static_cast<std::size_t>(k)];
        if (!t.is_identity()) c.transform = t;
        s.columns.push_back(std::move(c));
    }
    s.columns.push_back({"stratum", ColumnRole::stratum, {}, std::nullopt});
    s.columns.push_back({"pi", ColumnRole::weight, {}, std::nullopt});
    return s;
}

/// Writes the data CSV and its schema; load_dataset reproduces Y, R, X and pi exactly.
inline void save_dataset(const MixedDataset& d, const std::string& data_path, const std::string& schema_path,
                         const std::string& na_marker = "NA")
{
    MixedDataset named = d;
    named.fill_default_names();
    const Schema s = schema_for(named, na_marker);
    {
        std::ofstream out(schema_path);
        if (!out) throw IoError("cannot open '" + schema_path + "' for writing");
        out << schema_to_json(s).dump(2) << '\n';
    }
    CsvWriter w(data_path);
    std::vector<std::string> header;
    for (const auto& c : s.columns) header.push_back(c.name);
    w.row(header);
    for (Index i = 0; i < d.rows(); ++i) {
        std::vector<std::string> f;
        for (Index k = 0; k < d.covariate_dim(); ++k) f.push_back(format_double(d.x(i, k)));
        for (Index k = 0; k < d.columns(); ++k) f.push_back(is_na(d.y(i, k)) ? na_marker : format_double(d.y(i, k)));
        f.push_back(named.stratum_labels[d.strata[static_cast<std::size_t>(i)]]);
        f.push_back(format_double(d.pi(i)));
        w.row(f);
    }
}

// ---------------------------------------------------------------------------
// Matrices and result tables

inline void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header,
                             const Provenance& provenance = {}, const std::string& na_marker = "NA")
{
    if (static_cast<Index>(header.size()) != m.cols()) throw ShapeError("write_matrix_csv: header width mismatch");
    CsvWriter w(path, provenance);
    w.row(header);
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> f;
        for (Index j = 0; j < m.cols(); ++j) f.push_back(is_na(m(i, j)) ? na_marker : format_double(m(i, j)));
        w.row(f);
    }
}

inline Matrix read_matrix_csv(const std::string& path, const std::string& na_marker = "NA")
{
    const CsvTable t = read_csv(path);
    Matrix m(static_cast<Index>(t.rows.size()), static_cast<Index>(t.header.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        for (std::size_t j = 0; j < t.header.size(); ++j) {
            const auto& text = t.rows[i][j];
            if (text == na_marker) {
                m(static_cast<Index>(i), static_cast<Index>(j)) = kNA;
                continue;
            }
            const auto v = parse_double(text);
            if (!v) throw SchemaViolation("'" + path + "': invalid number '" + text + "'");
            m(static_cast<Index>(i), static_cast<Index>(j)) = *v;
        }
    }
    return m;
}

/// Objective trace as (k, objective, accepted_flag).
inline void write_trace_csv(const std::string& path, const CompletionResult& result, const Provenance& provenance = {})
{
    CsvWriter w(path, provenance);
    w.row({"k", "objective", "accepted_flag"});
    for (std::size_t k = 0; k < result.objective_trace.size(); ++k) {
        w.row({std::to_string(k), format_double(result.objective_trace[k]), result.accepted[k] ? "1" : "0"});
    }
}

inline void write_tune_csv(const std::string& path, const TuneResult& result, const Provenance& provenance = {})
{
    CsvWriter w(path, provenance);
    w.row({"tau", "score", "selected"});
    for (const auto& s : result.scores) {
        w.row({format_double(s.tau), format_double(s.score), s.tau == result.best_tau ? "1" : "0"});
    }
}

/// Summary: (method, scenario, block, mean_RE, se_RE, n_replicates, n_failures).
inline void write_benchmark_summary_csv(const std::string& path, const BenchmarkSummary& summary,
                                        const Provenance& provenance = {})
{
    CsvWriter w(path, provenance);
    w.row({"method", "scenario", "block", "mean_RE", "se_RE", "n_replicates", "n_failures"});
    const std::string scenario = summary.config.scenario_label();
    for (const auto& r : summary.rows) {
        w.row({std::string(method_name(r.method)), scenario, r.block, format_double(r.mean), format_double(r.se),
               std::to_string(r.replicates), std::to_string(r.failures)});
    }
}

/// Long format, one line per (replicate, method, block).
inline void write_benchmark_replicates_csv(const std::string& path, const BenchmarkSummary& summary,
                                           const Provenance& provenance = {})
{
    CsvWriter w(path, provenance);
    w.row({"replicate", "seed", "method", "scenario", "block", "RE", "response_rate", "failed"});
    const std::string scenario = summary.config.scenario_label();
    const CategoryLayout& layout = summary.config.spec.layout;
    for (const auto& rep : summary.reports) {
        for (const auto& o : rep.outcomes) {
            const auto emit = [&](const std::string& block, double v) {
                w.row({std::to_string(rep.replicate), std::to_string(rep.seed), std::string(method_name(o.method)),
                       scenario, block, o.failed ? "nan" : format_double(v), format_double(rep.response_rate),
                       o.failed ? "1" : "0"});
            };
            emit("overall", o.overall);
            for (std::size_t s = 0; s < layout.block_count(); ++s) {
                emit(block_label(layout, s), s < o.blocks.size() ? o.blocks[s] : std::nan(""));
            }
            emit("overall_mean_scale", o.overall_mean_scale);
        }
    }
}

}  // namespace svymc
