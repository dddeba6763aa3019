#pragma once

// Scalar-generic utility formulas shared by direct evaluation (double) and
// gradient-based fitting (Dual). Domain violations yield NaN here; the
// checked public API in utility.hpp turns them into DomainError.

#include <cmath>
#include <limits>
#include <span>

#include "riskpref/dual.hpp"
#include "riskpref/utility.hpp"

namespace riskpref::formulas {

using std::exp;
using std::expm1;
using std::log;
using std::pow;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Dual's overload is found by ADL; double needs one in scope.
inline double max(double a, double b) { return a >= b ? a : b; }

template <class T>
T crra(const T& gamma, double x) {
    if (!(x > 0.0)) return T(kNaN);
    const double lx = std::log(x);
    if (value_of(gamma) == 1.0) return T(lx);
    const T e = 1.0 - gamma;
    return expm1(e * lx) / e;
}

template <class T>
T cara(const T& alpha, double scale, double x) {
    const double y = x / scale;
    if (value_of(alpha) == 0.0) return T(y);
    return -expm1(-alpha * y) / alpha;
}

template <class T>
T prospect(const T& alpha, const T& beta, const T& lambda, double r0, double x) {
    if (x >= r0) return pow(T(x - r0), alpha);
    return -lambda * pow(T(r0 - x), beta);
}

template <class T>
T piecewise_fs(const T& c1, const T& c2, const T& a1, const T& a2, const T& a3, double x) {
    if (x < 0.0) return T(kNaN);
    if (x < value_of(c1)) return pow(x, a1);
    const T y1 = pow(c1, a1);
    if (x < value_of(c2)) return y1 + (pow(x, a2) - pow(c1, a2));
    const T y2 = y1 + (pow(c2, a2) - pow(c1, a2));
    return y2 + (pow(x, a3) - pow(c2, a3));
}

/// u(x) for a non-Epstein-Zin family; `p` holds the canonical parameters.
template <class T>
T outcome_utility(Family family, std::span<const T> p, double x) {
    switch (family) {
        case Family::Linear:
            return T(x);
        case Family::Power:
            if (!(x > 0.0)) return T(kNaN);
            return pow(x, p[0]);
        case Family::Quadratic:
            return p[0] * x - p[1] * (x * x);
        case Family::CRRA:
            return crra(p[0], x);
        case Family::CARA:
            return cara(p[0], value_of(p[1]), x);
        case Family::HARA: {
            const T base = p[0] + p[1] * x;
            if (!(value_of(base) > 0.0)) return T(kNaN);
            return (1.0 - p[2]) / p[2] * pow(base, p[2]);
        }
        case Family::ExpoPower:
            if (!(x > 0.0)) return T(kNaN);
            return -expm1(-p[0] * pow(x, 1.0 - p[1])) / p[0];
        case Family::Prospect:
            return prospect(p[0], p[1], p[2], value_of(p[3]), x);
        case Family::PiecewiseFS:
            return piecewise_fs(p[0], p[1], p[2], p[3], p[4], x);
        case Family::EpsteinZin:
            return T(kNaN);
    }
    return T(kNaN);
}

template <class T>
T weight(WeightingKind kind, const T& gamma, const T& delta, double prob) {
    if (prob <= 0.0) return T(0.0);
    if (prob >= 1.0) return T(1.0);
    switch (kind) {
        case WeightingKind::None:
            return T(prob);
        case WeightingKind::Prelec:
            return exp(-pow(T(-std::log(prob)), gamma));
        case WeightingKind::GonzalezWu: {
            const T num = delta * pow(prob, gamma);
            return num / (num + pow(1.0 - prob, gamma));
        }
    }
    return T(prob);
}

/// Scalar Epstein-Zin aggregator over (reward, probability) pairs.
template <class T>
T epstein_zin(const T& alpha, const T& psi, const T& beta_disc, std::span<const Outcome> outcomes,
              double eps) {
    T exp_term(0.0);
    const T one_minus_alpha = 1.0 - alpha;
    for (const auto& o : outcomes) {
        if (o.reward < 0.0) return T(kNaN);
        exp_term += o.probability * pow(T(o.reward), one_minus_alpha);
    }
    const T pos = max(exp_term, T(eps));
    const T rho = 1.0 - 1.0 / psi;
    const T inner = pow(pos, rho / one_minus_alpha);
    const T agg = (1.0 - beta_disc) * pow(eps, rho) + beta_disc * inner;
    return pow(agg, 1.0 / rho);
}

template <class T>
T lottery_utility(Family family, std::span<const T> p, std::span<const Outcome> outcomes, double eps,
                  WeightingKind wkind = WeightingKind::None, const T& wgamma = T(1.0),
                  const T& wdelta = T(1.0)) {
    if (family == Family::EpsteinZin) return epstein_zin(p[0], p[1], p[2], outcomes, eps);
    T total(0.0);
    for (const auto& o : outcomes) {
        const T u = outcome_utility(family, p, o.reward);
        if (wkind == WeightingKind::None) {
            total += o.probability * u;
        } else {
            total += weight(wkind, wgamma, wdelta, o.probability) * u;
        }
    }
    return total;
}

}  // namespace riskpref::formulas
