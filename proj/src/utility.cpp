#include "riskpref/utility.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "riskpref/utility_formulas.hpp"

namespace riskpref {

namespace {

using namespace std::string_view_literals;

constexpr std::array<std::string_view, 0> kNoParams{};
constexpr std::array kPowerParams{"alpha"sv};
constexpr std::array kQuadraticParams{"a"sv, "b"sv};
constexpr std::array kCrraParams{"gamma"sv};
constexpr std::array kCaraParams{"alpha"sv, "scale"sv};
constexpr std::array kHaraParams{"a"sv, "b"sv, "gamma"sv};
constexpr std::array kExpoPowerParams{"alpha"sv, "theta"sv};
constexpr std::array kProspectParams{"alpha"sv, "beta"sv, "lambda"sv, "r0"sv};
constexpr std::array kEpsteinZinParams{"alpha"sv, "psi"sv, "beta_disc"sv};
constexpr std::array kPiecewiseParams{"c1"sv, "c2"sv, "alpha1"sv, "alpha2"sv, "alpha3"sv};

std::optional<double> default_param(Family family, std::string_view name) {
    if (family == Family::CARA && name == "scale") return 250.0;
    if (family == Family::Prospect && name == "r0") return 0.0;
    return std::nullopt;
}

std::string fmt_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void require_finite_x(double x) {
    if (!std::isfinite(x)) throw DomainError("outcome must be finite");
}

void check_outcome_domain(const UtilityModel& m, double x) {
    require_finite_x(x);
    switch (m.family) {
        case Family::Power:
        case Family::CRRA:
        case Family::ExpoPower:
            if (!(x > 0.0)) {
                throw DomainError(std::string(family_name(m.family)) + " utility requires x > 0, got " +
                                  fmt_num(x));
            }
            break;
        case Family::PiecewiseFS:
            if (x < 0.0) throw DomainError("piecewise_fs utility requires x >= 0, got " + fmt_num(x));
            break;
        case Family::HARA:
            if (!(m.params[0] + m.params[1] * x > 0.0)) {
                throw DomainError("hara utility requires a + b*x > 0 at x = " + fmt_num(x));
            }
            break;
        case Family::EpsteinZin:
            if (x < 0.0) throw DomainError("epstein_zin rewards must be non-negative");
            break;
        default:
            break;
    }
}

void require_valid(const UtilityModel& model) {
    const auto report = validate_params(model);
    if (!report.ok()) {
        std::string msg = "invalid " + std::string(family_name(model.family)) + " parameters:";
        for (const auto& v : report.violations) msg += " [" + v + "]";
        throw std::invalid_argument(msg);
    }
}

}  // namespace

std::string_view family_name(Family family) {
    switch (family) {
        case Family::Linear: return "linear";
        case Family::Power: return "power";
        case Family::Quadratic: return "quadratic";
        case Family::CRRA: return "crra";
        case Family::CARA: return "cara";
        case Family::HARA: return "hara";
        case Family::ExpoPower: return "expo_power";
        case Family::Prospect: return "prospect";
        case Family::EpsteinZin: return "epstein_zin";
        case Family::PiecewiseFS: return "piecewise_fs";
    }
    return "unknown";
}

Family parse_family(std::string_view name) {
    for (Family f : kAllFamilies) {
        if (family_name(f) == name) return f;
    }
    if (name == "saha" || name == "expopower") return Family::ExpoPower;
    if (name == "fs" || name == "friedman_savage" || name == "piecewise") return Family::PiecewiseFS;
    if (name == "ez" || name == "epsteinzin") return Family::EpsteinZin;
    throw std::invalid_argument("unknown utility family: " + std::string(name));
}

std::span<const std::string_view> param_names(Family family) {
    switch (family) {
        case Family::Linear: return kNoParams;
        case Family::Power: return kPowerParams;
        case Family::Quadratic: return kQuadraticParams;
        case Family::CRRA: return kCrraParams;
        case Family::CARA: return kCaraParams;
        case Family::HARA: return kHaraParams;
        case Family::ExpoPower: return kExpoPowerParams;
        case Family::Prospect: return kProspectParams;
        case Family::EpsteinZin: return kEpsteinZinParams;
        case Family::PiecewiseFS: return kPiecewiseParams;
    }
    return kNoParams;
}

Lottery::Lottery(std::vector<Outcome> outcomes) : outcomes_(std::move(outcomes)) {
    if (outcomes_.empty()) throw std::invalid_argument("lottery needs at least one outcome");
    double total = 0.0;
    for (const auto& o : outcomes_) {
        if (!std::isfinite(o.reward)) throw std::invalid_argument("lottery reward must be finite");
        if (!(o.probability >= 0.0 && o.probability <= 1.0)) {
            throw std::invalid_argument("lottery probability outside [0,1]");
        }
        total += o.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("lottery probabilities sum to " + fmt_num(total) + ", expected 1");
    }
}

double Lottery::max_reward() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& o : outcomes_) m = std::max(m, o.reward);
    return m;
}

double Lottery::min_reward() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& o : outcomes_) m = std::min(m, o.reward);
    return m;
}

UtilityModel UtilityModel::make(Family family, const std::map<std::string, double>& named) {
    UtilityModel m;
    m.family = family;
    const auto names = param_names(family);
    for (const auto& [key, _] : named) {
        if (std::find(names.begin(), names.end(), key) == names.end()) {
            throw std::invalid_argument("unknown parameter '" + key + "' for family " +
                                        std::string(family_name(family)));
        }
    }
    for (auto name : names) {
        auto it = named.find(std::string(name));
        if (it != named.end()) {
            m.params.push_back(it->second);
        } else if (auto d = default_param(family, name)) {
            m.params.push_back(*d);
        } else {
            throw std::invalid_argument("missing parameter '" + std::string(name) + "' for family " +
                                        std::string(family_name(family)));
        }
    }
    return m;
}

double UtilityModel::param(std::string_view name) const {
    const auto names = param_names(family);
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return params.at(i);
    }
    throw std::invalid_argument("family " + std::string(family_name(family)) + " has no parameter '" +
                                std::string(name) + "'");
}

std::map<std::string, double> UtilityModel::named_params() const {
    std::map<std::string, double> out;
    const auto names = param_names(family);
    for (std::size_t i = 0; i < names.size() && i < params.size(); ++i) {
        out.emplace(std::string(names[i]), params[i]);
    }
    return out;
}

std::vector<std::string> WeightingScheme::violations() const {
    std::vector<std::string> out;
    if (kind == WeightingKind::None) return out;
    if (!(gamma > 0.0) || !std::isfinite(gamma)) out.emplace_back("gamma > 0");
    if (kind == WeightingKind::GonzalezWu && (!(delta > 0.0) || !std::isfinite(delta))) {
        out.emplace_back("delta > 0");
    }
    return out;
}

std::string_view weighting_name(WeightingKind kind) {
    switch (kind) {
        case WeightingKind::None: return "none";
        case WeightingKind::Prelec: return "prelec";
        case WeightingKind::GonzalezWu: return "gonzalez_wu";
    }
    return "none";
}

WeightingKind parse_weighting(std::string_view name) {
    if (name == "none" || name.empty()) return WeightingKind::None;
    if (name == "prelec") return WeightingKind::Prelec;
    if (name == "gonzalez_wu" || name == "gw") return WeightingKind::GonzalezWu;
    throw std::invalid_argument("unknown weighting scheme: " + std::string(name));
}

ValidationReport validate_params(const UtilityModel& model) {
    ValidationReport r;
    auto& v = r.violations;
    const auto names = param_names(model.family);
    if (model.params.size() != names.size()) {
        v.push_back("expected " + std::to_string(names.size()) + " parameters, got " +
                    std::to_string(model.params.size()));
        return r;
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!std::isfinite(model.params[i])) v.push_back(std::string(names[i]) + " finite");
    }
    if (!v.empty()) return r;
    if (!(model.numeric_epsilon > 0.0)) v.emplace_back("numeric_epsilon > 0");

    const auto& p = model.params;
    const double eps = model.numeric_epsilon;
    switch (model.family) {
        case Family::Linear:
        case Family::Power:
        case Family::CRRA:
            break;
        case Family::Quadratic:
            if (!(p[1] > 0.0)) v.emplace_back("b > 0");
            break;
        case Family::CARA:
            if (!(p[0] >= 0.0)) v.emplace_back("alpha >= 0");
            if (!(p[1] > 0.0)) v.emplace_back("scale > 0");
            break;
        case Family::HARA: {
            if (p[2] == 0.0) v.emplace_back("gamma != 0");
            const auto& d = model.domain;
            const double at_lo = p[0] + p[1] * d.lo;
            const bool lo_ok = d.lo_inclusive ? at_lo > 0.0 : at_lo >= 0.0;
            bool hi_ok = true;
            if (std::isfinite(d.hi)) {
                hi_ok = p[0] + p[1] * d.hi > 0.0;
            } else {
                hi_ok = p[1] >= 0.0 && (p[1] > 0.0 || p[0] > 0.0);
            }
            if (!lo_ok || !hi_ok) v.emplace_back("a + b*x > 0");
            break;
        }
        case Family::ExpoPower:
            if (!(p[0] > 0.0)) v.emplace_back("alpha > 0");
            if (!(p[1] >= 0.0 && p[1] < 1.0)) v.emplace_back("0 <= theta < 1");
            break;
        case Family::Prospect:
            if (!(p[0] > 0.0 && p[0] <= 1.0)) v.emplace_back("alpha in (0,1]");
            if (!(p[1] > 0.0 && p[1] <= 1.0)) v.emplace_back("beta in (0,1]");
            if (!(p[2] > 0.0)) v.emplace_back("lambda > 0");
            break;
        case Family::EpsteinZin:
            if (!(p[2] > 0.0 && p[2] < 1.0)) v.emplace_back("0 < beta_disc < 1");
            if (p[1] == 0.0 || !(std::abs(1.0 - 1.0 / p[1]) > eps)) v.emplace_back("|1 - 1/psi| > epsilon");
            if (!(std::abs(1.0 - p[0]) > eps)) v.emplace_back("|1 - alpha| > epsilon");
            break;
        case Family::PiecewiseFS:
            if (!(p[0] > 0.0 && p[0] < p[1])) v.emplace_back("0 < c1 < c2");
            if (!(p[2] > 0.0 && p[2] <= 1.0)) v.emplace_back("alpha1 in (0,1]");
            if (!(p[4] > 0.0 && p[4] <= 1.0)) v.emplace_back("alpha3 in (0,1]");
            if (!(p[3] > 1.0)) v.emplace_back("alpha2 > 1");
            break;
    }
    return r;
}

double eval_utility(const UtilityModel& model, double x) {
    if (model.family == Family::EpsteinZin) {
        throw std::invalid_argument("epstein_zin utility is defined on lotteries only");
    }
    require_valid(model);
    check_outcome_domain(model, x);
    return formulas::outcome_utility<double>(model.family, model.params, x);
}

double weight_probability(const WeightingScheme& scheme, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probability outside [0,1]: " + fmt_num(p));
    const auto bad = scheme.violations();
    if (!bad.empty()) throw std::invalid_argument("invalid weighting scheme: " + bad.front());
    return formulas::weight<double>(scheme.kind, scheme.gamma, scheme.delta, p);
}

double expected_utility(const UtilityModel& model, const Lottery& lottery, const WeightingScheme& weighting) {
    require_valid(model);
    const auto bad = weighting.violations();
    if (!bad.empty()) throw std::invalid_argument("invalid weighting scheme: " + bad.front());
    for (const auto& o : lottery.outcomes()) check_outcome_domain(model, o.reward);
    return formulas::lottery_utility<double>(model.family, model.params, lottery.outcomes(),
                                             model.numeric_epsilon, weighting.kind, weighting.gamma,
                                             weighting.delta);
}

}  // namespace riskpref
