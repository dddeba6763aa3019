#pragma once

#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace riskpref {

/// Raised when an outcome or probability lies outside a function's domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

enum class Family {
    Linear,
    Power,
    Quadratic,
    CRRA,
    CARA,
    HARA,
    ExpoPower,
    Prospect,
    EpsteinZin,
    PiecewiseFS,
};

inline constexpr Family kAllFamilies[] = {
    Family::Linear,   Family::Power,     Family::Quadratic, Family::CRRA,       Family::CARA,
    Family::HARA,     Family::ExpoPower, Family::Prospect,  Family::EpsteinZin, Family::PiecewiseFS,
};

std::string_view family_name(Family family);
/// Accepts the canonical names plus a few aliases ("saha", "fs").
Family parse_family(std::string_view name);

/// Canonical parameter order of a family. CARA carries its normalising
/// `scale` and Prospect its reference point `r0` as ordinary parameters.
std::span<const std::string_view> param_names(Family family);

struct Outcome {
    double reward = 0.0;
    double probability = 0.0;
};

/// Finite distribution over monetary rewards. Construction validates that
/// probabilities lie in [0,1] and sum to one within 1e-9.
class Lottery {
public:
    Lottery() = default;
    explicit Lottery(std::vector<Outcome> outcomes);

    [[nodiscard]] const std::vector<Outcome>& outcomes() const { return outcomes_; }
    [[nodiscard]] std::size_t size() const { return outcomes_.size(); }
    [[nodiscard]] double max_reward() const;
    [[nodiscard]] double min_reward() const;

    friend bool operator==(const Lottery&, const Lottery&) = default;

private:
    std::vector<Outcome> outcomes_;
};

/// Interval of outcomes a model must be well defined on. The upper end is
/// closed; the lower end is open unless `lo_inclusive`.
struct OutcomeDomain {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    bool lo_inclusive = false;
};

struct UtilityModel {
    Family family = Family::Linear;
    std::vector<double> params;  // canonical order, see param_names()
    double numeric_epsilon = 1e-8;
    OutcomeDomain domain;

    /// Builds a model from named parameters. Missing parameters fall back to
    /// the family default when one exists (CARA scale = 250, Prospect r0 = 0);
    /// otherwise std::invalid_argument is thrown, as it is for unknown names.
    static UtilityModel make(Family family, const std::map<std::string, double>& named = {});

    [[nodiscard]] double param(std::string_view name) const;
    [[nodiscard]] std::map<std::string, double> named_params() const;
};

enum class WeightingKind { None, Prelec, GonzalezWu };

struct WeightingScheme {
    WeightingKind kind = WeightingKind::None;
    double gamma = 1.0;
    double delta = 1.0;

    static WeightingScheme none() { return {}; }
    static WeightingScheme prelec(double gamma) { return {WeightingKind::Prelec, gamma, 1.0}; }
    static WeightingScheme gonzalez_wu(double delta, double gamma) {
        return {WeightingKind::GonzalezWu, gamma, delta};
    }

    [[nodiscard]] std::vector<std::string> violations() const;
};

std::string_view weighting_name(WeightingKind kind);
WeightingKind parse_weighting(std::string_view name);

struct ValidationReport {
    std::vector<std::string> violations;
    [[nodiscard]] bool ok() const { return violations.empty(); }
};

ValidationReport validate_params(const UtilityModel& model);

/// u(x) for every family except Epstein-Zin, which only aggregates lotteries.
double eval_utility(const UtilityModel& model, double x);

/// Probability-weighted utility of a lottery. Epstein-Zin uses its scalar
/// recursive aggregator and ignores the weighting scheme.
double expected_utility(const UtilityModel& model, const Lottery& lottery,
                        const WeightingScheme& weighting = {});

double weight_probability(const WeightingScheme& scheme, double p);

}  // namespace riskpref
