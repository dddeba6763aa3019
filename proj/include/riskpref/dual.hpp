#pragma once

// Forward-mode automatic differentiation with a fixed-capacity gradient.
// Utility formulas are templated on the scalar type so the sampler can
// obtain exact log-posterior gradients from the same code that evaluates
// utilities in double precision.

#include <array>
#include <cmath>
#include <cstddef>

namespace riskpref {

inline constexpr std::size_t kMaxDualDim = 8;

template <std::size_t N>
struct DualN {
    double v = 0.0;
    std::array<double, N> d{};

    constexpr DualN() = default;
    constexpr DualN(double value) : v(value) {}  // NOLINT: implicit constant promotion

    static DualN variable(double value, std::size_t index) {
        DualN x(value);
        x.d[index] = 1.0;
        return x;
    }

    DualN& operator+=(const DualN& o) {
        v += o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    DualN& operator-=(const DualN& o) {
        v -= o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    DualN& operator*=(const DualN& o) {
        for (std::size_t i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    DualN& operator/=(const DualN& o) {
        const double inv = 1.0 / o.v;
        const double q = v * inv;
        for (std::size_t i = 0; i < N; ++i) d[i] = (d[i] - q * o.d[i]) * inv;
        v = q;
        return *this;
    }

    // Applies the chain rule for a unary function with value fx and slope dfx.
    friend DualN chain(const DualN& x, double fx, double dfx) {
        DualN r(fx);
        for (std::size_t i = 0; i < N; ++i) r.d[i] = dfx * x.d[i];
        return r;
    }

    friend DualN operator+(DualN a, const DualN& b) { return a += b; }
    friend DualN operator-(DualN a, const DualN& b) { return a -= b; }
    friend DualN operator*(DualN a, const DualN& b) { return a *= b; }
    friend DualN operator/(DualN a, const DualN& b) { return a /= b; }
    friend DualN operator-(const DualN& a) { return chain(a, -a.v, -1.0); }

    friend DualN operator+(DualN a, double b) { a.v += b; return a; }
    friend DualN operator+(double a, DualN b) { b.v += a; return b; }
    friend DualN operator-(DualN a, double b) { a.v -= b; return a; }
    friend DualN operator-(double a, const DualN& b) { return chain(b, a - b.v, -1.0); }
    friend DualN operator*(const DualN& a, double b) { return chain(a, a.v * b, b); }
    friend DualN operator*(double a, const DualN& b) { return chain(b, a * b.v, a); }
    friend DualN operator/(const DualN& a, double b) { return chain(a, a.v / b, 1.0 / b); }
    friend DualN operator/(double a, const DualN& b) { return chain(b, a / b.v, -a / (b.v * b.v)); }

    friend bool operator<(const DualN& a, const DualN& b) { return a.v < b.v; }
    friend bool operator>(const DualN& a, const DualN& b) { return a.v > b.v; }
    friend bool operator<=(const DualN& a, const DualN& b) { return a.v <= b.v; }
    friend bool operator>=(const DualN& a, const DualN& b) { return a.v >= b.v; }

    friend DualN exp(const DualN& x) {
        const double e = std::exp(x.v);
        return chain(x, e, e);
    }
    friend DualN expm1(const DualN& x) {
        const double em1 = std::expm1(x.v);
        return chain(x, em1, em1 + 1.0);
    }
    friend DualN log(const DualN& x) { return chain(x, std::log(x.v), 1.0 / x.v); }
    friend DualN log1p(const DualN& x) { return chain(x, std::log1p(x.v), 1.0 / (1.0 + x.v)); }
    friend DualN sqrt(const DualN& x) {
        const double s = std::sqrt(x.v);
        return chain(x, s, 0.5 / s);
    }
    friend DualN abs(const DualN& x) { return x.v < 0.0 ? -x : x; }
    friend DualN max(const DualN& a, const DualN& b) { return a.v >= b.v ? a : b; }

    // x^k with a constant exponent.
    friend DualN pow(const DualN& x, double k) {
        const double p = std::pow(x.v, k);
        const double slope = (x.v == 0.0) ? (k == 1.0 ? 1.0 : 0.0) : k * p / x.v;
        return chain(x, p, slope);
    }
    // b^y with a constant base b > 0.
    friend DualN pow(double b, const DualN& y) {
        const double p = std::pow(b, y.v);
        return chain(y, p, p * std::log(b));
    }
    friend DualN pow(const DualN& x, const DualN& y) {
        if (x.v == 0.0) return DualN(std::pow(0.0, y.v));
        return exp(y * log(x));
    }

    friend double value_of(const DualN& x) { return x.v; }
};

using Dual = DualN<kMaxDualDim>;

inline double value_of(double x) { return x; }

}  // namespace riskpref
