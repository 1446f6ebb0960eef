#pragma once

// Canonical one-parameter exponential families with density
//   f(y | z) = h(y) exp{ y z - g(z) },
// where g is the log-partition function, g' the mean and g'' the variance.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "svymc/errors.hpp"

namespace svymc {

enum class FamilyKind { bernoulli, poisson, gaussian, exponential };

struct Family {
    FamilyKind kind = FamilyKind::gaussian;
    double sigma = 1.0;  // gaussian only

    static Family bernoulli() { return {FamilyKind::bernoulli, 1.0}; }
    static Family poisson() { return {FamilyKind::poisson, 1.0}; }
    static Family gaussian(double sigma = 1.0)
    {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) {
            throw InvalidInput("gaussian family requires sigma > 0");
        }
        return {FamilyKind::gaussian, sigma};
    }
    static Family exponential() { return {FamilyKind::exponential, 1.0}; }

    friend bool operator==(const Family&, const Family&) = default;
};

/// Upper end of the exponential family's clamp box; the domain itself is z < 0.
inline constexpr double kExponentialUpper = -1e-8;

inline std::string_view family_name(FamilyKind k)
{
    switch (k) {
        case FamilyKind::bernoulli: return "bernoulli";
        case FamilyKind::poisson: return "poisson";
        case FamilyKind::gaussian: return "gaussian";
        case FamilyKind::exponential: return "exponential";
    }
    return "unknown";
}

inline std::string_view family_name(const Family& f) { return family_name(f.kind); }

/// Parses a lowercase family name; throws InvalidInput for unknown names.
inline Family parse_family(std::string_view name, double sigma = 1.0)
{
    if (name == "bernoulli") return Family::bernoulli();
    if (name == "poisson") return Family::poisson();
    if (name == "gaussian") return Family::gaussian(sigma);
    if (name == "exponential") return Family::exponential();
    throw InvalidInput("unknown family '" + std::string(name) + "'");
}

inline bool in_domain(const Family& f, double z)
{
    if (!std::isfinite(z)) return false;
    return f.kind != FamilyKind::exponential || z < 0.0;
}

namespace detail {

inline void check_domain(const Family& f, double z)
{
    if (!in_domain(f, z)) {
        throw DomainError("natural parameter " + std::to_string(z) + " outside the domain of the " +
                          std::string(family_name(f)) + " family");
    }
}

// log(1 + e^z) without overflow
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double logistic(double z)
{
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace detail

/// Log-partition function g(z).
inline double log_partition(const Family& f, double z)
{
    detail::check_domain(f, z);
    switch (f.kind) {
        case FamilyKind::bernoulli: return detail::softplus(z);
        case FamilyKind::poisson: return std::exp(z);
        case FamilyKind::gaussian: return 0.5 * f.sigma * f.sigma * z * z;
        case FamilyKind::exponential: return -std::log(-z);
    }
    return 0.0;
}

/// Mean function g'(z) = E[Y | z].
inline double mean_function(const Family& f, double z)
{
    detail::check_domain(f, z);
    switch (f.kind) {
        case FamilyKind::bernoulli: return detail::logistic(z);
        case FamilyKind::poisson: return std::exp(z);
        case FamilyKind::gaussian: return f.sigma * f.sigma * z;
        case FamilyKind::exponential: return -1.0 / z;
    }
    return 0.0;
}

/// Variance function g''(z) = Var[Y | z].
inline double variance_function(const Family& f, double z)
{
    detail::check_domain(f, z);
    switch (f.kind) {
        case FamilyKind::bernoulli: {
            const double e = std::exp(-std::abs(z));
            return e / ((1.0 + e) * (1.0 + e));
        }
        case FamilyKind::poisson: return std::exp(z);
        case FamilyKind::gaussian: return f.sigma * f.sigma;
        case FamilyKind::exponential: return 1.0 / (z * z);
    }
    return 0.0;
}

/// Draws Y ~ f(. | z) from the caller's stream.
template <class Rng>
double draw_response(const Family& f, double z, Rng& rng)
{
    detail::check_domain(f, z);
    switch (f.kind) {
        case FamilyKind::bernoulli: {
            std::bernoulli_distribution d(detail::logistic(z));
            return d(rng) ? 1.0 : 0.0;
        }
        case FamilyKind::poisson: {
            std::poisson_distribution<std::int64_t> d(std::exp(z));
            return static_cast<double>(d(rng));
        }
        case FamilyKind::gaussian: {
            std::normal_distribution<double> d(f.sigma * f.sigma * z, f.sigma);
            return d(rng);
        }
        case FamilyKind::exponential: {
            std::exponential_distribution<double> d(-z);
            return d(rng);
        }
    }
    return 0.0;
}

/// Natural-parameter box [lo, hi] used to keep iterates evaluable.
inline std::pair<double, double> clamp_box(const Family& f, double bound)
{
    if (f.kind == FamilyKind::exponential) return {-bound, kExponentialUpper};
    return {-bound, bound};
}

inline double project_to_box(const Family& f, double z, double bound)
{
    const auto [lo, hi] = clamp_box(f, bound);
    if (std::isnan(z)) return std::clamp(0.0, lo, hi);
    return std::clamp(z, lo, hi);
}

/**
 * Maps a mean-scale value back to the natural scale, the inverse of g'.
 * Values at the boundary of the mean space are pulled in by eps first.
 */
inline double inverse_mean(const Family& f, double mean, double eps = 1e-3)
{
    switch (f.kind) {
        case FamilyKind::bernoulli: {
            const double p = std::clamp(mean, eps, 1.0 - eps);
            return std::log(p / (1.0 - p));
        }
        case FamilyKind::poisson: return std::log(std::max(mean, eps));
        case FamilyKind::gaussian: return mean / (f.sigma * f.sigma);
        case FamilyKind::exponential: return -1.0 / std::max(mean, eps);
    }
    return 0.0;
}

/// Ordered blocks of response columns, each sharing one family.
class CategoryLayout {
public:
    struct Block {
        Family family;
        std::size_t columns = 0;
    };

    CategoryLayout() = default;

    explicit CategoryLayout(std::vector<Block> blocks) : blocks_(std::move(blocks))
    {
        if (blocks_.empty()) throw InvalidInput("layout needs at least one block");
        for (const auto& b : blocks_) {
            if (b.columns == 0) throw InvalidInput("layout block with zero columns");
        }
        rebuild();
    }

    const std::vector<Block>& blocks() const { return blocks_; }
    std::size_t block_count() const { return blocks_.size(); }
    std::size_t total_columns() const { return column_block_.size(); }

    std::size_t block_of(std::size_t column) const { return column_block_.at(column); }
    const Family& family_of(std::size_t column) const { return blocks_[block_of(column)].family; }
    std::size_t block_offset(std::size_t block) const { return offsets_.at(block); }

    friend bool operator==(const CategoryLayout& a, const CategoryLayout& b)
    {
        if (a.blocks_.size() != b.blocks_.size()) return false;
        for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
            if (!(a.blocks_[i].family == b.blocks_[i].family) ||
                a.blocks_[i].columns != b.blocks_[i].columns) {
                return false;
            }
        }
        return true;
    }

private:
    void rebuild()
    {
        column_block_.clear();
        offsets_.clear();
        for (std::size_t s = 0; s < blocks_.size(); ++s) {
            offsets_.push_back(column_block_.size());
            column_block_.insert(column_block_.end(), blocks_[s].columns, s);
        }
    }

    std::vector<Block> blocks_;
    std::vector<std::size_t> column_block_;
    std::vector<std::size_t> offsets_;
};

/// Parses "gaussian:30,poisson:30,bernoulli:30" (gaussian may carry
/// a sigma as "gaussian@2:10").
inline CategoryLayout parse_layout(std::string_view text)
{
    std::vector<CategoryLayout::Block> blocks;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string_view item = text.substr(pos, comma - pos);
        const std::size_t colon = item.find(':');
        if (colon == std::string_view::npos) {
            throw InvalidInput("layout item '" + std::string(item) + "' must be family:count");
        }
        std::string_view name = item.substr(0, colon);
        double sigma = 1.0;
        if (const std::size_t at = name.find('@'); at != std::string_view::npos) {
            const auto text_sigma = name.substr(at + 1);
            const auto [ptr, ec] = std::from_chars(text_sigma.data(), text_sigma.data() + text_sigma.size(), sigma);
            if (ec != std::errc() || ptr != text_sigma.data() + text_sigma.size()) {
                throw InvalidInput("layout item '" + std::string(item) + "' has an invalid sigma");
            }
            name = name.substr(0, at);
        }
        const auto text_count = item.substr(colon + 1);
        long count = 0;
        const auto [ptr, ec] = std::from_chars(text_count.data(), text_count.data() + text_count.size(), count);
        if (ec != std::errc() || ptr != text_count.data() + text_count.size() || count <= 0) {
            throw InvalidInput("layout item '" + std::string(item) + "' needs a positive column count");
        }
        blocks.push_back({parse_family(name, sigma), static_cast<std::size_t>(count)});
        pos = comma + 1;
    }
    return CategoryLayout(std::move(blocks));
}

}  // namespace svymc
