#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "btp/errors.hpp"
#include "btp/quadrature.hpp"

namespace btp {

using SpacePoint = std::vector<double>;

/// Which clock weight to integrate against in `subordinate`.
enum class ClockWeight {
    density,     ///< 2 K^BM_{t;0,s}
    time_deriv   ///< d/dt of the above
};

namespace detail {

inline void check_time(double t, const char* what) {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError(std::string(what) + " must be positive and finite");
}

inline void check_dim(int d) {
    if (d < 1) throw DomainError("dimension must be >= 1");
}

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DomainError("points have different dimensions");
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - y[i];
        if (!std::isfinite(dx)) throw DomainError("non-finite coordinate");
        r2 += dx * dx;
    }
    return r2;
}

inline double gauss_r2(double s, double r2, int d) {
    return std::exp(-r2 / (2.0 * s)) * std::pow(2.0 * std::numbers::pi * s, -0.5 * d);
}

}  // namespace detail

/// Heat kernel (2 pi t)^{-d/2} exp(-|x-y|^2 / 2t); d is taken from the points.
inline double bm_kernel(double t, std::span<const double> x, std::span<const double> y) {
    detail::check_time(t, "t");
    detail::check_dim(static_cast<int>(x.size()));
    return detail::gauss_r2(t, detail::squared_distance(x, y), static_cast<int>(x.size()));
}

/// One-dimensional Gaussian density in s with variance t.
inline double bm_time_weight(double t, double s) {
    detail::check_time(t, "t");
    return std::exp(-s * s / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t);
}

/// Integrates a vector-valued g against the Brownian clock:
/// out = 2 int_0^inf g(s) K^BM_{t;0,s} ds (or its t-derivative).
///
/// Uses s = sqrt(t) w^2, which turns the clock into 4w/sqrt(2pi) e^{-w^4/2} on
/// [0, sqrt(tail_cutoff)] and absorbs s^{-1/2} singularities at the origin.
template <class G>
void subordinate_vector(double t, std::size_t m, G&& g, std::span<double> out, const QuadratureSpec& q,
                        ClockWeight weight = ClockWeight::density) {
    detail::check_time(t, "t");
    const double rt = std::sqrt(t);
    const double c = 4.0 / std::sqrt(2.0 * std::numbers::pi);
    std::vector<double> gv(m);
    integrate_vector(
        [&](double w, std::span<double> o) {
            const double w2 = w * w, w4 = w2 * w2;
            double wt = c * w * std::exp(-0.5 * w4);
            if (weight == ClockWeight::time_deriv) wt *= (w4 - 1.0) / (2.0 * t);
            g(rt * w2, std::span<double>(gv));
            for (std::size_t j = 0; j < m; ++j) o[j] = wt * gv[j];
        },
        0.0, std::sqrt(q.tail_cutoff), m, out, q);
}

template <class G>
double subordinate(double t, G&& g, const QuadratureSpec& q, ClockWeight weight = ClockWeight::density) {
    double r = 0.0;
    subordinate_vector(
        t, 1, [&](double s, std::span<double> o) { o[0] = g(s); }, std::span<double>(&r, 1), q, weight);
    return r;
}

/// BTBM density as a function of r^2 = |x-y|^2. Infinite on the diagonal for d >= 2.
inline double btbm_density_r2(double t, double r2, int d, const QuadratureSpec& q = {}) {
    detail::check_time(t, "t");
    detail::check_dim(d);
    q.validate();
    if (r2 == 0.0 && d >= 2) return std::numeric_limits<double>::infinity();
    return subordinate(t, [&](double s) { return detail::gauss_r2(s, r2, d); }, q);
}

/// Brownian-time Brownian motion density K^BTBM_{t;x,y}.
inline double btbm_density(double t, std::span<const double> x, std::span<const double> y,
                           const QuadratureSpec& q = {}) {
    detail::check_dim(static_cast<int>(x.size()));
    return btbm_density_r2(t, detail::squared_distance(x, y), static_cast<int>(x.size()), q);
}

/// d/dt of the BTBM density (clock weight differentiated inside the integral).
inline double btbm_density_dt_r2(double t, double r2, int d, const QuadratureSpec& q = {}) {
    detail::check_time(t, "t");
    detail::check_dim(d);
    if (r2 == 0.0 && d >= 2) return -std::numeric_limits<double>::infinity();
    return subordinate(t, [&](double s) { return detail::gauss_r2(s, r2, d); }, q, ClockWeight::time_deriv);
}

/// 2-Brownian-times density at spatial offset r (|offset|^2 = r2):
/// 4 int int K^BM_{r1+r2;r} K^BM_{u;0,r1} K^BM_{v;0,r2} dr1 dr2.
///
/// At r = 0 the clock pair (r1, r2) = (sqrt(u) rho cos th, sqrt(v) rho sin th)
/// separates the integral into a Gamma function times an angular integral.
/// Off the diagonal a tensor product of two clock integrals is used, nested with
/// the smaller time outside so the result is exactly symmetric in (u, v).
inline double btbm2_density(double u, double v, int d, const QuadratureSpec& q = {}, double r2 = 0.0) {
    detail::check_time(u, "u");
    detail::check_time(v, "v");
    detail::check_dim(d);
    q.validate();
    if (u > v) std::swap(u, v);
    if (r2 == 0.0) {
        if (d >= 4) return std::numeric_limits<double>::infinity();
        const double su = std::sqrt(u), sv = std::sqrt(v);
        const double angular = integrate(
            [&](double th) { return std::pow(su * std::cos(th) + sv * std::sin(th), -0.5 * d); }, 0.0,
            0.5 * std::numbers::pi, q);
        return 2.0 / std::numbers::pi * std::pow(2.0 * std::numbers::pi, -0.5 * d) * std::pow(2.0, -0.25 * d) *
               std::tgamma(1.0 - 0.25 * d) * angular;
    }
    const QuadratureSpec inner = q.with_tol(q.rel_tol * 0.1);
    return subordinate(
        u,
        [&](double s1) {
            return subordinate(v, [&](double s2) { return detail::gauss_r2(s1 + s2, r2, d); }, inner);
        },
        q);
}

/// Total mass of the BTBM density, integrated radially. Used for normalization checks.
inline double btbm_mass(double t, int d, const QuadratureSpec& q = {}) {
    detail::check_time(t, "t");
    detail::check_dim(d);
    const double area = 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
    const double rmax = 40.0 * std::pow(t, 0.25);
    const QuadratureSpec inner = q.with_tol(q.rel_tol * 0.1);
    // r = rmax * y^2 keeps the integrable r^{d-1} log r behaviour at the origin smooth.
    return integrate(
        [&](double y) {
            const double r = rmax * y * y;
            return area * std::pow(r, d - 1) * btbm_density_r2(t, r * r, d, inner) * 2.0 * rmax * y;
        },
        0.0, 1.0, q, 8);
}

}  // namespace btp
