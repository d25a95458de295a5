#pragma once

#include <cmath>

namespace advmk {

/// First-order dual number: value plus one tangent component. Replaying a
/// gradient computation with Dual scalars seeded along a direction v yields
/// the exact Hessian-vector product H*v in the tangent parts.
struct Dual {
    double re = 0.0;
    double du = 0.0;

    Dual() = default;
    Dual(double r) : re(r), du(0.0) {}
    Dual(double r, double d) : re(r), du(d) {}

    Dual& operator+=(const Dual& o) { re += o.re; du += o.du; return *this; }
    Dual& operator-=(const Dual& o) { re -= o.re; du -= o.du; return *this; }
    Dual& operator*=(const Dual& o) { du = du * o.re + re * o.du; re *= o.re; return *this; }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator-(const Dual& a) { return {-a.re, -a.du}; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(const Dual& a, const Dual& b) {
    double inv = 1.0 / b.re;
    double re = a.re * inv;
    return {re, (a.du - re * b.du) * inv};
}
inline bool operator<(const Dual& a, const Dual& b) { return a.re < b.re; }
inline bool operator>(const Dual& a, const Dual& b) { return a.re > b.re; }
inline bool operator==(const Dual& a, const Dual& b) { return a.re == b.re; }

inline Dual exp(const Dual& a) { double e = std::exp(a.re); return {e, e * a.du}; }
inline Dual log(const Dual& a) { return {std::log(a.re), a.du / a.re}; }
inline Dual sqrt(const Dual& a) { double s = std::sqrt(a.re); return {s, s > 0.0 ? 0.5 * a.du / s : 0.0}; }
inline Dual tanh(const Dual& a) { double t = std::tanh(a.re); return {t, (1.0 - t * t) * a.du}; }

/// Scalar access helpers so numeric code can be written once for double/Dual.
inline double real_part(double v) { return v; }
inline double real_part(const Dual& v) { return v.re; }
inline bool is_finite(double v) { return std::isfinite(v); }
inline bool is_finite(const Dual& v) { return std::isfinite(v.re) && std::isfinite(v.du); }

} // namespace advmk
