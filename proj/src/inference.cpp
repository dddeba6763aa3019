#include "riskpref/inference.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "riskpref/dual.hpp"
#include "riskpref/utility_formulas.hpp"

namespace riskpref {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

template <class T>
T softplus(const T& x) {
    using std::abs;
    using std::exp;
    using std::log1p;
    const T pos = value_of(x) > 0.0 ? x : T(0.0);
    return pos + log1p(exp(-abs(x)));
}

template <class T>
T sigmoid(const T& u) {
    using std::exp;
    if (value_of(u) >= 0.0) return 1.0 / (1.0 + exp(-u));
    const T e = exp(u);
    return e / (1.0 + e);
}

bool is_fixed_name(Family family, std::string_view name) {
    return (family == Family::CARA && name == "scale") || (family == Family::Prospect && name == "r0");
}

std::vector<std::string> weighting_param_names(WeightingKind kind) {
    switch (kind) {
        case WeightingKind::None: return {};
        case WeightingKind::Prelec: return {"prelec_gamma"};
        case WeightingKind::GonzalezWu: return {"gw_delta", "gw_gamma"};
    }
    return {};
}

// Sampling-space map for one constrained parameter.
struct Transform {
    enum Kind { Identity, Lower, Upper, Interval } kind = Identity;
    double lo = 0.0;
    double hi = 0.0;
    double center = 0.0;
    double scale = 1.0;

    static Transform from_prior(const Prior& p) {
        Transform t;
        const bool lo_finite = std::isfinite(p.lo);
        const bool hi_finite = std::isfinite(p.hi);
        t.lo = p.lo;
        t.hi = p.hi;
        t.scale = p.kind == PriorKind::Beta ? 1.0 : p.b;
        t.center = p.kind == PriorKind::HalfNormal ? 0.0 : p.a;
        if (lo_finite && hi_finite) {
            t.kind = Interval;
        } else if (lo_finite) {
            t.kind = Lower;
        } else if (hi_finite) {
            t.kind = Upper;
        }
        return t;
    }

    template <class T>
    T forward(const T& u, T& log_jac) const {
        using std::exp;
        using std::log;
        switch (kind) {
            case Identity:
                log_jac += std::log(scale);
                return center + scale * u;
            case Lower:
                log_jac += std::log(scale) + u;
                return lo + scale * exp(u);
            case Upper:
                log_jac += std::log(scale) + u;
                return hi - scale * exp(u);
            case Interval:
                log_jac += std::log(hi - lo) - softplus(u) - softplus(T(-u));
                return lo + (hi - lo) * sigmoid(u);
        }
        return u;
    }

    [[nodiscard]] double inverse(double x) const {
        switch (kind) {
            case Identity: return (x - center) / scale;
            case Lower: return std::log((x - lo) / scale);
            case Upper: return std::log((hi - x) / scale);
            case Interval: {
                const double f = (x - lo) / (hi - lo);
                return std::log(f) - std::log1p(-f);
            }
        }
        return x;
    }
};

double prior_log_normaliser(const Prior& p) {
    switch (p.kind) {
        case PriorKind::HalfNormal: return std::log(2.0) - std::log(p.b) - kHalfLog2Pi;
        case PriorKind::Beta: return std::lgamma(p.a + p.b) - std::lgamma(p.a) - std::lgamma(p.b);
        case PriorKind::Normal:
        case PriorKind::TruncNormal: {
            const double mass = normal_cdf((p.hi - p.a) / p.b) - normal_cdf((p.lo - p.a) / p.b);
            return -std::log(p.b) - kHalfLog2Pi - std::log(mass);
        }
    }
    return 0.0;
}

// Golden-section maximisation of f on [lo, hi].
template <class F>
double golden_max(F&& f, double lo, double hi, int iters) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters; ++i) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return fc >= fd ? c : d;
}

std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    return out;
}

// Replaces every value by the normal score of its pooled (average) rank.
std::vector<std::vector<double>> rank_normalise(const std::vector<std::vector<double>>& chains) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t c = 0; c < chains.size(); ++c) {
        for (std::size_t i = 0; i < chains[c].size(); ++i) all.emplace_back(chains[c][i], c * chains[0].size() + i);
    }
    std::sort(all.begin(), all.end());
    const double s = static_cast<double>(all.size());
    std::vector<double> z(all.size());
    const boost::math::normal std_normal;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        const double score = boost::math::quantile(std_normal, (rank - 0.375) / (s + 0.25));
        for (std::size_t k = i; k < j; ++k) z[all[k].second] = score;
        i = j;
    }
    auto out = chains;
    for (std::size_t c = 0; c < chains.size(); ++c) {
        for (std::size_t i = 0; i < chains[c].size(); ++i) out[c][i] = z[c * chains[0].size() + i];
    }
    return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double var_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

double basic_rhat(const std::vector<std::vector<double>>& chains) {
    const double n = static_cast<double>(chains[0].size());
    std::vector<double> means, vars;
    for (const auto& c : chains) {
        means.push_back(mean_of(c));
        vars.push_back(var_of(c));
    }
    const double between = n * var_of(means);
    const double within = mean_of(vars);
    if (within == 0.0) return between == 0.0 ? 1.0 : kInf;
    return std::sqrt((between / within + n - 1.0) / n);
}

void check_chain_shape(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2) throw std::invalid_argument("diagnostics need at least two chains");
    for (const auto& c : chains) {
        if (c.size() != chains[0].size()) throw std::invalid_argument("chains differ in length");
    }
    if (chains[0].size() < 4) throw std::invalid_argument("diagnostics need at least four draws per chain");
}

std::vector<std::vector<double>> column_chains(const McmcResult& r, std::size_t k) {
    std::vector<std::vector<double>> out;
    for (const auto& m : r.chains) {
        std::vector<double> c(static_cast<std::size_t>(m.rows()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) c[static_cast<std::size_t>(i)] = m(i, static_cast<Eigen::Index>(k));
        out.push_back(std::move(c));
    }
    return out;
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

// ---- priors ----------------------------------------------------------------

Prior Prior::half_normal(double sigma) { return {PriorKind::HalfNormal, 0.0, sigma, 0.0, kInf}; }
Prior Prior::normal(double mu, double sigma) { return {PriorKind::Normal, mu, sigma, -kInf, kInf}; }
Prior Prior::beta(double a, double b) { return {PriorKind::Beta, a, b, 0.0, 1.0}; }
Prior Prior::truncated_normal(double mu, double sigma, double lo, double hi) {
    return {PriorKind::TruncNormal, mu, sigma, lo, hi};
}

bool Prior::in_support(double x) const {
    if (std::isnan(x)) return false;
    switch (kind) {
        case PriorKind::HalfNormal: return x >= 0.0 && x <= hi;
        case PriorKind::Beta: return x > 0.0 && x < 1.0;
        default: return x >= lo && x <= hi;
    }
}

double Prior::log_density(double x) const {
    if (!in_support(x)) return -kInf;
    const double c = prior_log_normaliser(*this);
    switch (kind) {
        case PriorKind::HalfNormal: return c - 0.5 * (x / b) * (x / b);
        case PriorKind::Beta: return c + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
        case PriorKind::Normal:
        case PriorKind::TruncNormal: return c - 0.5 * ((x - a) / b) * ((x - a) / b);
    }
    return -kInf;
}

std::vector<std::string> Prior::violations() const {
    std::vector<std::string> out;
    if (kind == PriorKind::Beta) {
        if (!(a > 0.0 && b > 0.0)) out.emplace_back("beta shapes > 0");
    } else if (!(b > 0.0) || !std::isfinite(b)) {
        out.emplace_back("sigma > 0");
    }
    if (!(lo < hi)) out.emplace_back("truncation lo < hi");
    return out;
}

std::string Prior::describe() const {
    switch (kind) {
        case PriorKind::HalfNormal: return "HalfNormal(" + format_number(b) + ")";
        case PriorKind::Beta: return "Beta(" + format_number(a) + ", " + format_number(b) + ")";
        case PriorKind::Normal:
            if (std::isinf(lo) && std::isinf(hi)) return "Normal(" + format_number(a) + ", " + format_number(b) + ")";
            [[fallthrough]];
        case PriorKind::TruncNormal:
            return "TruncNormal(" + format_number(a) + ", " + format_number(b) + ", " + format_number(lo) + ", " +
                   format_number(hi) + ")";
    }
    return "?";
}

std::vector<std::string> PriorSpec::violations() const {
    std::vector<std::string> out;
    for (const auto& [name, p] : priors) {
        for (const auto& v : p.violations()) out.push_back(name + ": " + v);
    }
    return out;
}

std::vector<std::string> free_param_names(Family family, WeightingKind weighting) {
    std::vector<std::string> out;
    for (auto n : param_names(family)) {
        if (is_fixed_name(family, n)) continue;
        out.emplace_back(family == Family::PiecewiseFS && n == "c2" ? "delta" : std::string(n));
    }
    for (auto& w : weighting_param_names(weighting)) out.push_back(w);
    out.emplace_back("beta_sensitivity");
    return out;
}

PriorSpec default_priors(Family family, WeightingKind weighting, double M, const PriorOptions& o) {
    PriorSpec s;
    s.max_reward_M = M;
    auto& p = s.priors;
    const Prior curvature = Prior::half_normal(1.0);
    switch (family) {
        case Family::Linear: break;
        case Family::Power: p["alpha"] = curvature; break;
        case Family::Quadratic:
            p["a"] = Prior::normal(1.0, 1.0);
            p["b"] = Prior::half_normal(1.0);
            break;
        case Family::CRRA: p["gamma"] = o.wide_crra_prior ? Prior::normal(0.0, 3.0) : curvature; break;
        case Family::CARA:
            p["alpha"] = curvature;
            s.fixed["scale"] = o.cara_scale;
            break;
        case Family::HARA:
            p["a"] = Prior::normal(1.0, 1.0);
            p["b"] = Prior::half_normal(1.0);
            p["gamma"] = curvature;
            break;
        case Family::ExpoPower:
            p["alpha"] = curvature;
            p["theta"] = Prior::truncated_normal(0.0, 1.0, 0.0, 1.0);
            break;
        case Family::Prospect:
            p["alpha"] = Prior::truncated_normal(0.0, 1.0, 0.0, 1.0);
            p["beta"] = Prior::truncated_normal(0.0, 1.0, 0.0, 1.0);
            p["lambda"] = Prior::truncated_normal(2.0, 1.0, 0.0, kInf);
            s.fixed["r0"] = o.prospect_r0;
            break;
        case Family::EpsteinZin:
            p["alpha"] = curvature;
            p["psi"] = Prior::truncated_normal(1.0, 0.5, 0.0, kInf);
            p["beta_disc"] = Prior::beta(2.0, 2.0);
            break;
        case Family::PiecewiseFS:
            if (!(M > 0.0)) throw std::invalid_argument("piecewise priors need a positive max reward");
            p["c1"] = Prior::truncated_normal(0.25 * M, 0.10 * M, o.epsilon, M);
            p["delta"] = Prior::half_normal(0.2 * M);
            p["alpha1"] = Prior::truncated_normal(0.7, 0.15, o.epsilon, 1.0);
            p["alpha2"] = Prior::truncated_normal(1.3, 0.15, 1.0, kInf);
            p["alpha3"] = Prior::truncated_normal(0.7, 0.15, o.epsilon, 1.0);
            break;
    }
    switch (weighting) {
        case WeightingKind::None: break;
        case WeightingKind::Prelec: p["prelec_gamma"] = Prior::truncated_normal(0.65, 0.2, 0.0, kInf); break;
        case WeightingKind::GonzalezWu:
            p["gw_delta"] = Prior::truncated_normal(0.8, 0.3, 0.0, kInf);
            p["gw_gamma"] = Prior::truncated_normal(0.6, 0.2, 0.0, kInf);
            break;
    }
    p["beta_sensitivity"] = Prior::half_normal(2.0);
    return s;
}

FitModel make_fit_model(Family family, WeightingKind weighting, double M, const PriorOptions& options) {
    return {family, weighting, default_priors(family, weighting, M, options)};
}

double FitData::max_reward() const {
    double m = 0.0;
    for (const auto& q : questions) {
        for (const auto& opt : q.options) m = std::max(m, opt.max_reward());
    }
    return m;
}

// ---- posterior density -------------------------------------------------------

PosteriorDensity::PosteriorDensity(FitModel model, const FitData& data)
    : model_(std::move(model)), names_(free_param_names(model_.family, model_.weighting)) {
    if (data.questions.empty()) throw std::invalid_argument("fit data is empty");
    if (data.chosen.size() != data.questions.size()) throw std::invalid_argument("fit data: label count mismatch");
    if (names_.size() > kMaxDualDim) throw std::invalid_argument("too many free parameters for the gradient type");
    if (auto v = model_.priors.violations(); !v.empty()) throw std::invalid_argument("invalid prior: " + v.front());

    for (const auto& n : names_) {
        auto it = model_.priors.priors.find(n);
        if (it == model_.priors.priors.end()) throw std::invalid_argument("no prior for parameter " + n);
        priors_.push_back(it->second);
        prior_log_norm_.push_back(prior_log_normaliser(it->second));
    }
    std::size_t free = 0;
    for (auto n : param_names(model_.family)) {
        Slot s;
        if (is_fixed_name(model_.family, n)) {
            auto it = model_.priors.fixed.find(std::string(n));
            if (it == model_.priors.fixed.end()) throw std::invalid_argument("missing fixed value for " + std::string(n));
            s.kind = SlotKind::Fixed;
            s.value = it->second;
        } else if (model_.family == Family::PiecewiseFS && n == "c2") {
            s.kind = SlotKind::C1PlusDelta;
            s.index = 0;
            s.other = free++;
        } else {
            s.index = free++;
        }
        slots_.push_back(s);
    }
    weighting_index_ = free;
    beta_index_ = names_.size() - 1;

    option_begin_.push_back(0);
    question_begin_.push_back(0);
    for (std::size_t i = 0; i < data.questions.size(); ++i) {
        const auto& q = data.questions[i];
        if (q.option_count() < 2) throw std::invalid_argument("question " + q.id + " has fewer than two options");
        if (data.chosen[i] >= q.option_count()) throw std::invalid_argument("chosen index out of range for " + q.id);
        for (const auto& opt : q.options) {
            for (const auto& o : opt.outcomes()) outcomes_.push_back(o);
            option_begin_.push_back(static_cast<std::uint32_t>(outcomes_.size()));
        }
        question_begin_.push_back(static_cast<std::uint32_t>(option_begin_.size() - 1));
        chosen_.push_back(static_cast<std::uint32_t>(data.chosen[i]));
    }
    auto index_values = [&](auto field, std::vector<double>& values, std::vector<std::uint32_t>& index) {
        for (const auto& o : outcomes_) values.push_back(field(o));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (const auto& o : outcomes_) {
            const auto it = std::lower_bound(values.begin(), values.end(), field(o));
            index.push_back(static_cast<std::uint32_t>(it - values.begin()));
        }
    };
    index_values([](const Outcome& o) { return o.reward; }, rewards_, reward_of_);
    index_values([](const Outcome& o) { return o.probability; }, probs_, prob_of_);
}

template <class T>
T PosteriorDensity::prior_term(std::size_t k, const T& x) const {
    const Prior& p = priors_[k];
    const double xv = value_of(x);
    if (!p.in_support(xv)) return T(-kInf);
    using std::log;
    using std::log1p;
    switch (p.kind) {
        case PriorKind::HalfNormal: {
            const T z = x / p.b;
            return prior_log_norm_[k] - 0.5 * z * z;
        }
        case PriorKind::Beta: return prior_log_norm_[k] + (p.a - 1.0) * log(x) + (p.b - 1.0) * log1p(-x);
        case PriorKind::Normal:
        case PriorKind::TruncNormal: {
            const T z = (x - p.a) / p.b;
            return prior_log_norm_[k] - 0.5 * z * z;
        }
    }
    return T(-kInf);
}

template <class T>
T PosteriorDensity::likelihood(std::span<const T> x) const {
    using std::exp;
    using std::log;
    std::array<T, kMaxDualDim> canon{};
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const Slot& s = slots_[i];
        switch (s.kind) {
            case SlotKind::Free: canon[i] = x[s.index]; break;
            case SlotKind::Fixed: canon[i] = T(s.value); break;
            case SlotKind::C1PlusDelta: canon[i] = x[s.index] + x[s.other]; break;
        }
    }
    const std::span<const T> cp(canon.data(), slots_.size());
    T wgamma(1.0), wdelta(1.0);
    if (model_.weighting == WeightingKind::Prelec) {
        wgamma = x[weighting_index_];
    } else if (model_.weighting == WeightingKind::GonzalezWu) {
        wdelta = x[weighting_index_];
        wgamma = x[weighting_index_ + 1];
    }
    const T beta = x[beta_index_];
    constexpr double eps = 1e-8;

    std::vector<T> reward_u;
    std::vector<T> prob_w;
    const bool recursive = model_.family == Family::EpsteinZin;
    if (!recursive) {
        reward_u.reserve(rewards_.size());
        for (double r : rewards_) {
            reward_u.push_back(formulas::outcome_utility<T>(model_.family, cp, r));
            if (!std::isfinite(value_of(reward_u.back()))) return T(-kInf);
        }
        if (model_.weighting != WeightingKind::None) {
            for (double p : probs_) prob_w.push_back(formulas::weight<T>(model_.weighting, wgamma, wdelta, p));
        }
    }

    T total(0.0);
    std::array<T, 8> u{};
    for (std::size_t q = 0; q + 1 < question_begin_.size(); ++q) {
        const std::size_t ob = question_begin_[q], oe = question_begin_[q + 1];
        const std::size_t n = oe - ob;
        if (n > u.size()) return T(-kInf);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t b = option_begin_[ob + k], e = option_begin_[ob + k + 1];
            if (recursive) {
                u[k] = formulas::epstein_zin(cp[0], cp[1], cp[2], std::span<const Outcome>(outcomes_.data() + b, e - b),
                                             eps);
                if (!std::isfinite(value_of(u[k]))) return T(-kInf);
            } else if (prob_w.empty()) {
                u[k] = outcomes_[b].probability * reward_u[reward_of_[b]];
                for (std::size_t j = b + 1; j < e; ++j) u[k] += outcomes_[j].probability * reward_u[reward_of_[j]];
            } else {
                u[k] = prob_w[prob_of_[b]] * reward_u[reward_of_[b]];
                for (std::size_t j = b + 1; j < e; ++j) u[k] += prob_w[prob_of_[j]] * reward_u[reward_of_[j]];
            }
        }
        const std::size_t c = chosen_[q];
        if (n == 2) {
            const T z = beta * (u[c] - u[1 - c]);
            total -= softplus(T(-z));
        } else {
            std::size_t top = 0;
            for (std::size_t k = 1; k < n; ++k) {
                if (value_of(u[k]) > value_of(u[top])) top = k;
            }
            T sum(0.0);
            for (std::size_t k = 0; k < n; ++k) sum += exp(beta * (u[k] - u[top]));
            total += beta * (u[c] - u[top]) - log(sum);
        }
    }
    return total;
}

template <class T>
T PosteriorDensity::evaluate(std::span<const T> q) const {
    std::array<T, kMaxDualDim> x{};
    T lp(0.0);
    for (std::size_t k = 0; k < names_.size(); ++k) {
        x[k] = Transform::from_prior(priors_[k]).forward(q[k], lp);
        lp += prior_term(k, x[k]);
        if (!std::isfinite(value_of(lp))) return T(-kInf);
    }
    const T ll = likelihood(std::span<const T>(x.data(), names_.size()));
    if (!std::isfinite(value_of(ll))) return T(-kInf);
    return lp + ll;
}

double PosteriorDensity::log_density(std::span<const double> q) const { return evaluate(q); }

template <std::size_t N>
double PosteriorDensity::gradient(std::span<const double> q, std::span<double> grad) const {
    std::array<DualN<N>, N> d{};
    for (std::size_t k = 0; k < dim(); ++k) d[k] = DualN<N>::variable(q[k], k);
    const DualN<N> r = evaluate(std::span<const DualN<N>>(d.data(), dim()));
    for (std::size_t k = 0; k < dim(); ++k) grad[k] = std::isfinite(r.v) ? r.d[k] : 0.0;
    return std::isfinite(r.v) ? r.v : -kInf;
}

double PosteriorDensity::log_density_grad(std::span<const double> q, std::span<double> grad) const {
    if (dim() <= 1) return gradient<1>(q, grad);
    if (dim() <= 2) return gradient<2>(q, grad);
    if (dim() <= 4) return gradient<4>(q, grad);
    return gradient<kMaxDualDim>(q, grad);
}

std::vector<double> PosteriorDensity::to_constrained(std::span<const double> q) const {
    std::vector<double> out(dim());
    for (std::size_t k = 0; k < dim(); ++k) {
        double jac = 0.0;
        out[k] = Transform::from_prior(priors_[k]).forward(q[k], jac);
    }
    return out;
}

std::vector<double> PosteriorDensity::to_unconstrained(std::span<const double> params) const {
    std::vector<double> out(dim());
    for (std::size_t k = 0; k < dim(); ++k) out[k] = Transform::from_prior(priors_[k]).inverse(params[k]);
    return out;
}

double PosteriorDensity::log_lik(std::span<const double> params) const {
    if (params.size() != dim()) throw std::invalid_argument("parameter count mismatch");
    return likelihood(params);
}

double PosteriorDensity::log_joint(std::span<const double> params) const {
    if (params.size() != dim()) throw std::invalid_argument("parameter count mismatch");
    double lp = 0.0;
    for (std::size_t k = 0; k < dim(); ++k) {
        lp += prior_term(k, params[k]);
        if (!std::isfinite(lp)) return -kInf;
    }
    const double ll = likelihood(params);
    return std::isfinite(ll) ? lp + ll : -kInf;
}

double log_likelihood(const FitModel& model, std::span<const double> params, const FitData& data) {
    return PosteriorDensity(model, data).log_lik(params);
}

double log_posterior(const FitModel& model, std::span<const double> params, const FitData& data) {
    return PosteriorDensity(model, data).log_joint(params);
}

ChoiceModelSpec choice_spec_from_params(const FitModel& model, std::span<const double> params) {
    const auto names = free_param_names(model.family, model.weighting);
    if (params.size() != names.size()) throw std::invalid_argument("parameter count mismatch");
    std::map<std::string, double> named;
    for (std::size_t k = 0; k < names.size(); ++k) named[names[k]] = params[k];
    std::map<std::string, double> canon;
    for (auto n : param_names(model.family)) {
        const std::string key(n);
        if (is_fixed_name(model.family, n)) {
            canon[key] = model.priors.fixed.at(key);
        } else if (model.family == Family::PiecewiseFS && n == "c2") {
            canon[key] = named.at("c1") + named.at("delta");
        } else {
            canon[key] = named.at(key);
        }
    }
    ChoiceModelSpec spec;
    spec.utility = UtilityModel::make(model.family, canon);
    if (model.weighting == WeightingKind::Prelec) {
        spec.weighting = WeightingScheme::prelec(named.at("prelec_gamma"));
    } else if (model.weighting == WeightingKind::GonzalezWu) {
        spec.weighting = WeightingScheme::gonzalez_wu(named.at("gw_delta"), named.at("gw_gamma"));
    }
    spec.beta_sensitivity = named.at("beta_sensitivity");
    return spec;
}

// ---- sampling ------------------------------------------------------------------

std::vector<std::string> SamplerConfig::violations() const {
    std::vector<std::string> out;
    if (draws < 1) out.emplace_back("draws > 0");
    if (tune < 0) out.emplace_back("tune >= 0");
    if (chains < 1) out.emplace_back("chains > 0");
    if (!(target_accept > 0.0 && target_accept < 1.0)) out.emplace_back("target_accept in (0,1)");
    if (!(rhat_fail_threshold > 1.0)) out.emplace_back("rhat_fail_threshold > 1");
    if (max_tree_depth < 1) out.emplace_back("max_tree_depth > 0");
    if (max_init_attempts < 1) out.emplace_back("max_init_attempts > 0");
    return out;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t max_workers) {
    if (max_workers == 0) max_workers = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min(n, max_workers);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

McmcResult run_mcmc(const FitModel& model, const FitData& data, const SamplerConfig& config) {
    if (auto v = config.violations(); !v.empty()) throw std::invalid_argument("invalid sampler config: " + v.front());
    const PosteriorDensity density(model, data);
    const std::size_t dim = density.dim();
    const std::size_t beta_k = dim - 1;

    McmcResult result;
    result.param_names = density.names();
    result.chains.resize(static_cast<std::size_t>(config.chains));
    result.divergences.assign(static_cast<std::size_t>(config.chains), 0);
    std::vector<std::string> errors(static_cast<std::size_t>(config.chains));

    NutsConfig nuts;
    nuts.draws = config.draws;
    nuts.tune = config.tune;
    nuts.target_accept = config.target_accept;
    nuts.max_tree_depth = config.max_tree_depth;
    nuts.metric = config.metric;
    const NutsSampler sampler(density, nuts);
    const RandomStream root(config.seed, 0x4D434D43);

    parallel_for(static_cast<std::size_t>(config.chains), [&](std::size_t c) {
        RandomStream rng = root.split(c);
        Eigen::VectorXd q(static_cast<Eigen::Index>(dim));
        bool found = false;
        for (int attempt = 0; attempt < config.max_init_attempts && !found; ++attempt) {
            for (std::size_t k = 0; k < dim; ++k) q[static_cast<Eigen::Index>(k)] = rng.uniform(-2.0, 2.0);
            // The sensitivity's scale depends on the utility magnitudes, so it
            // is profiled rather than drawn.
            auto f = [&](double v) {
                Eigen::VectorXd t = q;
                t[static_cast<Eigen::Index>(beta_k)] = v;
                return density.log_density(std::span<const double>(t.data(), dim));
            };
            q[static_cast<Eigen::Index>(beta_k)] = golden_max(f, -80.0, 20.0, 90) + rng.uniform(-0.1, 0.1);
            found = std::isfinite(density.log_density(std::span<const double>(q.data(), dim)));
        }
        if (!found) {
            errors[c] = "no finite log posterior after " + std::to_string(config.max_init_attempts) + " initialisations";
            return;
        }
        try {
            const NutsChain chain = sampler.run(q, rng.split(1));
            Eigen::MatrixXd m(static_cast<Eigen::Index>(chain.draws.size()), static_cast<Eigen::Index>(dim));
            for (std::size_t i = 0; i < chain.draws.size(); ++i) {
                const auto x = density.to_constrained(std::span<const double>(chain.draws[i].data(), dim));
                for (std::size_t k = 0; k < dim; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = x[k];
            }
            result.chains[c] = std::move(m);
            result.divergences[c] = chain.divergences;
        } catch (const std::exception& e) {
            errors[c] = e.what();
        }
    });
    for (std::size_t c = 0; c < errors.size(); ++c) {
        if (!errors[c].empty()) {
            result.status = FitStatus::Failed;
            result.message = "chain " + std::to_string(c) + ": " + errors[c];
            break;
        }
    }
    return result;
}

// ---- diagnostics -----------------------------------------------------------------

double split_rhat(const std::vector<std::vector<double>>& chains) {
    check_chain_shape(chains);
    const auto split = split_chains(chains);
    const double bulk = basic_rhat(rank_normalise(split));
    std::vector<double> pooled;
    for (const auto& c : split) pooled.insert(pooled.end(), c.begin(), c.end());
    std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2), pooled.end());
    double median = pooled[pooled.size() / 2];
    if (pooled.size() % 2 == 0) {
        const double below = *std::max_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2));
        median = 0.5 * (median + below);
    }
    auto folded = split;
    for (auto& c : folded) {
        for (auto& x : c) x = std::abs(x - median);
    }
    const double tail = basic_rhat(rank_normalise(folded));
    return std::max(bulk, tail);
}

double ess_bulk(const std::vector<std::vector<double>>& chains) {
    check_chain_shape(chains);
    const auto z = rank_normalise(split_chains(chains));
    const std::size_t m = z.size();
    const std::size_t n = z[0].size();
    const double total = static_cast<double>(m * n);
    if (n < 4) return total;

    std::vector<double> means(m), acov0(m);
    for (std::size_t c = 0; c < m; ++c) means[c] = mean_of(z[c]);
    auto mean_autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            double a = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i) a += (z[c][i] - means[c]) * (z[c][i + lag] - means[c]);
            s += a / static_cast<double>(n);
        }
        return s / static_cast<double>(m);
    };
    const double nd = static_cast<double>(n);
    const double mean_var = mean_autocov(0) * nd / (nd - 1.0);
    double var_plus = mean_var * (nd - 1.0) / nd;
    if (m > 1) var_plus += var_of(means);
    if (!(var_plus > 0.0)) return total;

    std::vector<double> rho(n + 1, 0.0);
    rho[0] = 1.0;
    double even = 1.0;
    double odd = 1.0 - (mean_var - mean_autocov(1)) / var_plus;
    rho[1] = odd;
    std::size_t t = 1;
    while (t < n - 3 && even + odd > 0.0) {
        even = 1.0 - (mean_var - mean_autocov(t + 1)) / var_plus;
        odd = 1.0 - (mean_var - mean_autocov(t + 2)) / var_plus;
        if (even + odd >= 0.0) {
            rho[t + 1] = even;
            rho[t + 2] = odd;
        }
        t += 2;
    }
    const std::size_t max_t = t - 2;
    if (rho[max_t + 1] > 0.0) rho[max_t + 2] = rho[max_t + 1];
    for (std::size_t k = 1; k + 2 <= max_t; k += 2) {
        if (rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k]) {
            rho[k + 1] = 0.5 * (rho[k - 1] + rho[k]);
            rho[k + 2] = rho[k + 1];
        }
    }
    double tau = -1.0 + 2.0 * std::accumulate(rho.begin(), rho.begin() + static_cast<std::ptrdiff_t>(max_t + 1), 0.0) +
                 rho[max_t + 1];
    tau = std::max(tau, 1.0);
    return total / tau;
}

Diagnostics diagnostics(const McmcResult& result) {
    if (result.chains.size() < 2) throw std::invalid_argument("diagnostics need at least two chains");
    Diagnostics d;
    d.divergences = std::accumulate(result.divergences.begin(), result.divergences.end(), 0);
    d.max_rhat = 0.0;
    d.min_ess = kInf;
    for (std::size_t k = 0; k < result.param_names.size(); ++k) {
        const auto chains = column_chains(result, k);
        d.rhat.push_back(split_rhat(chains));
        d.ess.push_back(ess_bulk(chains));
        d.max_rhat = std::max(d.max_rhat, d.rhat.back());
        d.min_ess = std::min(d.min_ess, d.ess.back());
    }
    return d;
}

Interval hdi(std::vector<double> draws, double prob) {
    if (draws.empty()) throw std::invalid_argument("hdi of no draws");
    std::sort(draws.begin(), draws.end());
    const std::size_t n = draws.size();
    const auto inc = static_cast<std::size_t>(std::floor(prob * static_cast<double>(n)));
    if (inc == 0 || inc >= n) return {draws.front(), draws.back()};
    std::size_t best = 0;
    double width = kInf;
    for (std::size_t i = 0; i < n - inc; ++i) {
        const double w = draws[i + inc] - draws[i];
        if (w < width) {
            width = w;
            best = i;
        }
    }
    return {draws[best], draws[best + inc]};
}

std::vector<ParamSummary> summarize(const McmcResult& result) {
    std::vector<ParamSummary> out;
    for (std::size_t k = 0; k < result.param_names.size(); ++k) {
        std::vector<double> pooled;
        for (const auto& c : column_chains(result, k)) pooled.insert(pooled.end(), c.begin(), c.end());
        if (pooled.empty()) throw std::invalid_argument("summarize: no draws");
        ParamSummary s;
        s.name = result.param_names[k];
        s.mean = mean_of(pooled);
        s.sd = std::sqrt(var_of(pooled));
        const auto iv = hdi(pooled, 0.94);
        s.hdi_3 = iv.lo;
        s.hdi_97 = iv.hi;
        out.push_back(s);
    }
    return out;
}

// ---- fitting -------------------------------------------------------------------

ChoiceModelSpec FitResult::point_estimate(const FitModel& model) const {
    std::vector<double> means;
    for (const auto& p : params) means.push_back(p.mean);
    return choice_spec_from_params(model, means);
}

double prediction_accuracy(const ChoiceModelSpec& spec, const FitData& data) {
    std::vector<std::size_t> preds;
    preds.reserve(data.size());
    for (const auto& q : data.questions) preds.push_back(predict(spec, q));
    return accuracy(preds, data.chosen);
}

FitResult fit_model(const FitModel& model, const FitData& train, const FitData& test, const SamplerConfig& config) {
    FitResult r;
    r.family = model.family;
    r.weighting = model.weighting;
    McmcResult mcmc;
    try {
        mcmc = run_mcmc(model, train, config);
    } catch (const std::exception& e) {
        r.status = FitStatus::Failed;
        r.message = e.what();
        return r;
    }
    if (mcmc.status == FitStatus::Failed) {
        r.status = FitStatus::Failed;
        r.message = mcmc.message;
        return r;
    }
    r.params = summarize(mcmc);
    if (mcmc.chains.size() >= 2) {
        r.diagnostics = diagnostics(mcmc);
        if (!(r.diagnostics.max_rhat <= config.rhat_fail_threshold)) {
            r.status = FitStatus::Failed;
            r.message = "max R-hat " + format_number(r.diagnostics.max_rhat) + " exceeds threshold";
            return r;
        }
    } else {
        r.diagnostics.divergences = mcmc.divergences.empty() ? 0 : mcmc.divergences[0];
    }
    try {
        const auto spec = r.point_estimate(model);
        r.train_accuracy = prediction_accuracy(spec, train);
        if (!test.questions.empty()) r.held_out_accuracy = prediction_accuracy(spec, test);
    } catch (const std::exception& e) {
        r.status = FitStatus::Failed;
        r.message = std::string("point estimate unusable: ") + e.what();
        r.train_accuracy.reset();
        r.held_out_accuracy.reset();
    }
    return r;
}

std::vector<FitResult> fit_all_families(const FitData& train, const FitData& test,
                                        std::span<const FamilyRequest> families, const PriorOptions& priors,
                                        const SamplerConfig& config) {
    const double M = train.max_reward();
    std::vector<FitResult> results(families.size());
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::max<std::size_t>(1, hw / static_cast<std::size_t>(std::max(1, config.chains)));
    parallel_for(
        families.size(),
        [&](std::size_t i) {
            const auto model = make_fit_model(families[i].family, families[i].weighting, M, priors);
            SamplerConfig cfg = config;
            cfg.seed = RandomStream(config.seed, 0xFA11).split(i).engine()();
            results[i] = fit_model(model, train, test, cfg);
        },
        workers);
    std::vector<FitResult> ok, failed;
    for (auto& r : results) (r.status == FitStatus::Ok ? ok : failed).push_back(std::move(r));
    std::stable_sort(ok.begin(), ok.end(), [](const FitResult& a, const FitResult& b) {
        return a.held_out_accuracy.value_or(-1.0) > b.held_out_accuracy.value_or(-1.0);
    });
    ok.insert(ok.end(), std::make_move_iterator(failed.begin()), std::make_move_iterator(failed.end()));
    return ok;
}

std::string_view status_name(FitStatus status) { return status == FitStatus::Ok ? "ok" : "failed"; }

nlohmann::json fit_result_to_json(const FitResult& r) {
    nlohmann::json j;
    j["family"] = family_name(r.family);
    j["weighting"] = weighting_name(r.weighting);
    j["status"] = status_name(r.status);
    nlohmann::json params = nlohmann::json::object();
    for (const auto& p : r.params) {
        params[p.name] = {{"mean", p.mean}, {"sd", p.sd}, {"hdi_3", p.hdi_3}, {"hdi_97", p.hdi_97}};
    }
    j["params"] = params;
    j["diagnostics"] = {{"max_rhat", std::isfinite(r.diagnostics.max_rhat) ? nlohmann::json(r.diagnostics.max_rhat)
                                                                            : nlohmann::json(nullptr)},
                        {"divergences", r.diagnostics.divergences},
                        {"min_ess", r.diagnostics.min_ess}};
    j["accuracy"] = r.held_out_accuracy ? nlohmann::json(*r.held_out_accuracy) : nlohmann::json(nullptr);
    j["train_accuracy"] = r.train_accuracy ? nlohmann::json(*r.train_accuracy) : nlohmann::json(nullptr);
    if (!r.message.empty()) j["message"] = r.message;
    return j;
}

void write_fit_report(const std::string& path, const std::vector<FitResult>& results) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) arr.push_back(fit_result_to_json(r));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << arr.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_leaderboard_csv(const std::string& path, const std::vector<FitResult>& results) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "rank,family,weighting,status,accuracy,train_accuracy,max_rhat,divergences,min_ess\n";
    int rank = 0;
    for (const auto& r : results) {
        const bool ok = r.status == FitStatus::Ok;
        out << (ok ? std::to_string(++rank) : std::string("-")) << ',' << family_name(r.family) << ','
            << weighting_name(r.weighting) << ',' << status_name(r.status) << ','
            << (ok && r.held_out_accuracy ? format_number(100.0 * *r.held_out_accuracy) : "N/A") << ','
            << (ok && r.train_accuracy ? format_number(100.0 * *r.train_accuracy) : "N/A") << ','
            << (r.params.empty() ? "" : format_number(r.diagnostics.max_rhat)) << ',' << r.diagnostics.divergences
            << ',' << (r.params.empty() ? "" : format_number(r.diagnostics.min_ess)) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace riskpref
