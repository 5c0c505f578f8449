#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "btp/errors.hpp"
#include "btp/kernels.hpp"
#include "btp/lattice.hpp"
#include "btp/quadrature.hpp"

namespace btp {

/// Continuous space (delta unset) or the lattice delta Z^d.
struct KernelMode {
    std::optional<double> delta;

    static KernelMode continuous() { return {}; }
    static KernelMode lattice(double delta) {
        if (!(delta > 0.0)) throw DomainError("lattice spacing must be positive");
        return {delta};
    }
    bool is_lattice() const { return delta.has_value(); }
};

/// Spatial Hoelder exponent alpha admissible in dimension d:
/// (0, 1] for d = 1, (0, 1) for d = 2, (0, 1/2) for d = 3.
struct AlphaChoice {
    int d = 1;
    double alpha = 1.0;

    void validate() const {
        const bool ok = (d == 1 && alpha > 0.0 && alpha <= 1.0) || (d == 2 && alpha > 0.0 && alpha < 1.0) ||
                        (d == 3 && alpha > 0.0 && alpha < 0.5);
        if (!ok) throw DomainError("alpha outside the admissible interval for this dimension");
    }
};

/// Least-squares line through (log x, log y).
struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

inline SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("slope fit needs at least two matching points");
    const std::size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("log-log fit needs positive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx == 0.0) throw DomainError("slope fit needs distinct abscissae");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = ly[i] - f.intercept - f.slope * lx[i];
            sse += e * e;
        }
        f.slope_stderr = std::sqrt(sse / (n - 2) / sxx);
    }
    return f;
}

/// How an EstimateReport turns its measurements into a verdict.
enum class Criterion {
    slope,          ///< |slope - reference| < tolerance + 2 stderr
    below,          ///< every value < reference
    bounded_ratio,  ///< max/min of the values < 1 + tolerance
    decreasing,     ///< values strictly decreasing
    within          ///< every |value - reference| <= tolerance
};

/// Result of one estimate sweep. `passed()` depends only on the stored data.
struct EstimateReport {
    std::string quantity;
    std::vector<std::string> parameter_names;
    std::vector<std::vector<double>> parameters;  ///< one row per measurement
    std::vector<double> values;
    Criterion criterion = Criterion::below;
    double reference = 0.0;
    std::string reference_source;  ///< "published", "derived" or "exact"
    std::optional<SlopeFit> fit;
    double tolerance = 0.0;

    bool passed() const {
        if (values.empty()) return false;
        for (double v : values)
            if (!std::isfinite(v)) return false;
        switch (criterion) {
            case Criterion::slope:
                return fit && std::abs(fit->slope - reference) < tolerance + 2.0 * fit->slope_stderr;
            case Criterion::below:
                return std::all_of(values.begin(), values.end(), [&](double v) { return v < reference; });
            case Criterion::bounded_ratio: {
                const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
                return *lo > 0.0 && *hi / *lo < 1.0 + tolerance;
            }
            case Criterion::decreasing:
                for (std::size_t i = 1; i < values.size(); ++i)
                    if (!(values[i] < values[i - 1])) return false;
                return true;
            case Criterion::within:
                return std::all_of(values.begin(), values.end(), [&](double v) { return std::abs(v - reference) <= tolerance; });
        }
        return false;
    }
};

namespace detail {

inline void check_estimate_dim(int d) {
    if (d < 1 || d > 3) throw DomainError("kernel estimates are defined for d = 1, 2, 3");
}

inline LatticeSpec whole_lattice(double delta, int d) { return LatticeSpec{delta, d, std::nullopt, Boundary::zero}; }

/// Sum over all offsets of f(K) for a kernel box stored by |offset|.
template <class F>
double box_sum(const KernelBox& box, F&& f) {
    double total = 0.0;
    const auto R1 = static_cast<std::size_t>(box.radius + 1);
    for (std::size_t i = 0; i < box.values.size(); ++i) {
        std::size_t rem = i;
        double mult = 1.0;
        for (int a = 0; a < box.d; ++a) {
            if (rem % R1 != 0) mult *= 2.0;
            rem /= R1;
        }
        total += mult * f(i);
    }
    return total;
}

/// Iterates every signed offset in [-R, R]^d.
template <class F>
void for_each_offset(int d, long R, F&& f) {
    const long w = 2 * R + 1;
    std::size_t total = 1;
    for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(w);
    std::vector<long> off(d);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (int a = d - 1; a >= 0; --a) {
            off[a] = static_cast<long>(rem % w) - R;
            rem /= w;
        }
        f(std::span<const long>(off));
    }
}

}  // namespace detail

/// Squared L^2 norm of the kernel at time t: int K_t(x)^2 dx, or sum_x K_t(x)^2 on
/// the lattice. Scales exactly as t^{-d/4} in continuous space.
inline double l2_kernel_norm(double t, int d, KernelMode mode = KernelMode::continuous(),
                             const QuadratureSpec& q = {}) {
    detail::check_time(t, "t");
    detail::check_estimate_dim(d);
    if (!mode.is_lattice()) return btbm2_density(t, t, d, q);
    const double delta = *mode.delta;
    const KernelBox box = btrw_kernel_box(t, delta, d, btrw_support_radius(t, delta, q), q);
    return detail::box_sum(box, [&](std::size_t i) { return box.values[i] * box.values[i]; });
}

/// int_0^t ||K_{t-s} - K_{r-s}||^2 ds (K_s = 0 for s < 0), through the 2-Brownian-times
/// density: with h = t - r the integrand is K2(s+h, s+h) + K2(s, s) - 2 K2(s+h, s) on
/// (0, r), plus int_0^h K2(s, s) ds.
inline double temporal_difference_integral(double r, double t, int d, KernelMode mode = KernelMode::continuous(),
                                           const QuadratureSpec& q = {}) {
    detail::check_estimate_dim(d);
    if (!(r >= 0.0) || !std::isfinite(t)) throw DomainError("need 0 <= r");
    if (r >= t) {
        if (r == t) return 0.0;
        throw DomainError("temporal difference needs r < t");
    }
    q.validate();
    const double h = t - r;
    // the difference cancels to O((h/s)^2) of its terms; resolve them well below q.rel_tol
    const QuadratureSpec fine = q.with_tol(q.rel_tol * 1e-3);
    const LatticeSpec lat = mode.is_lattice() ? detail::whole_lattice(*mode.delta, d) : LatticeSpec{};
    const LatticePoint origin{std::vector<long>(d, 0), mode.is_lattice() ? *mode.delta : 1.0};

    auto k2 = [&](double u, double v) {
        return mode.is_lattice() ? btrw2_density(u, v, origin, lat, fine) : btbm2_density(u, v, d, fine);
    };
    // continuous diagonal values follow exactly from the scaling C_d s^{-d/4}
    const double cd = mode.is_lattice() ? 0.0 : btbm2_density(1.0, 1.0, d, fine);
    auto diag = [&](double s) { return mode.is_lattice() ? k2(s, s) : cd * std::pow(s, -0.25 * d); };

    double head = 0.0;
    if (r > 0.0) {
        // s = r y^4 smooths the s^{-d/4} endpoint behaviour
        head = integrate(
            [&](double y) {
                const double y2 = y * y, s = r * y2 * y2;
                if (s == 0.0) return 0.0;
                const double f = diag(s + h) + diag(s) - 2.0 * k2(s + h, s);
                return std::max(f, 0.0) * 4.0 * r * y2 * y;
            },
            0.0, 1.0, q, 8);
    }
    double tail;
    if (mode.is_lattice()) {
        tail = integrate(
            [&](double y) {
                const double s = h * y * y;
                return s == 0.0 ? 2.0 * h * y : diag(s) * 2.0 * h * y;
            },
            0.0, 1.0, q);
    } else {
        tail = cd * std::pow(h, 1.0 - 0.25 * d) / (1.0 - 0.25 * d);
    }
    return head + tail;
}

/// Lattice temporal difference by direct summation of squared kernel differences.
inline double temporal_difference_direct(double r, double t, double delta, int d, const QuadratureSpec& q = {}) {
    detail::check_estimate_dim(d);
    if (!(r >= 0.0) || !(r < t)) throw DomainError("temporal difference needs 0 <= r < t");
    q.validate();
    const double h = t - r;
    const long R = btrw_support_radius(t, delta, q);
    auto sq_norm = [&](double s) {
        const KernelBox b = btrw_kernel_box(s, delta, d, R, q);
        return detail::box_sum(b, [&](std::size_t i) { return b.values[i] * b.values[i]; });
    };
    double head = 0.0;
    if (r > 0.0) {
        head = integrate(
            [&](double y) {
                const double y2 = y * y, s = r * y2 * y2;
                const KernelBox a = btrw_kernel_box(s + h, delta, d, R, q);
                const KernelBox b = btrw_kernel_box(s, delta, d, R, q);
                const double f = detail::box_sum(a, [&](std::size_t i) {
                    const double e = a.values[i] - b.values[i];
                    return e * e;
                });
                return f * 4.0 * r * y2 * y;
            },
            0.0, 1.0, q, 8);
    }
    const double tail = integrate([&](double y) { return sq_norm(h * y * y) * 2.0 * h * y; }, 0.0, 1.0, q);
    return head + tail;
}

/// int_0^t ||K_s(.) - K_s(. + z)||^2 ds.
///
/// Continuous mode collapses the space and time integrals: in polar clock
/// coordinates (rho, theta) with c = cos theta + sin theta the value is
/// (8 / 2pi) int int (2 pi rho c)^{-d/2} (1 - e^{-|z|^2 / (2 rho c)}) E1(rho^2 / 2t) rho drho dtheta.
/// Lattice mode sums squared differences of kernel boxes; z must be a lattice offset.
inline double spatial_difference_integral(std::span<const double> z, double t, KernelMode mode = KernelMode::continuous(),
                                          const QuadratureSpec& q = {}) {
    const int d = static_cast<int>(z.size());
    detail::check_estimate_dim(d);
    detail::check_time(t, "t");
    q.validate();
    double z2 = 0.0;
    for (double c : z) z2 += c * c;
    if (z2 == 0.0) return 0.0;

    if (!mode.is_lattice()) {
        const double pi = std::numbers::pi;
        const double vlo = std::log(z2) - 40.0, vhi = std::log(9.0 * std::sqrt(t));
        if (vhi <= vlo) return 0.0;
        const QuadratureSpec inner = q.with_tol(q.rel_tol * 0.1);
        return 8.0 / (2.0 * pi) *
               integrate(
                   [&](double th) {
                       const double c = std::cos(th) + std::sin(th);
                       return integrate(
                           [&](double v) {
                               const double rho = std::exp(v), a = rho * c;
                               const double e1 = -std::expint(-rho * rho / (2.0 * t));
                               return std::pow(2.0 * pi * a, -0.5 * d) * -std::expm1(-z2 / (2.0 * a)) * e1 * rho * rho;
                           },
                           vlo, vhi, inner, 16);
                   },
                   0.0, 0.5 * pi, q);
    }

    const double delta = *mode.delta;
    std::vector<long> k(d);
    long kmax = 0;
    for (int a = 0; a < d; ++a) {
        const double ka = z[a] / delta;
        k[a] = std::lround(ka);
        if (std::abs(ka - k[a]) > 1e-9) throw DomainError("offset is not on the lattice");
        kmax = std::max(kmax, std::labs(k[a]));
    }
    const long R = btrw_support_radius(t, delta, q) + kmax;
    std::vector<long> shifted(d);
    return integrate(
        [&](double y) {
            const double s = t * y * y;
            if (s == 0.0) return 2.0 * 2.0 * t * y;  // two unit masses at distinct sites
            const KernelBox box = btrw_kernel_box(s, delta, d, R, q);
            double acc = 0.0;
            detail::for_each_offset(d, R, [&](std::span<const long> off) {
                for (int a = 0; a < d; ++a) shifted[a] = off[a] + k[a];
                const double e = box.at(off) - box.at(shifted);
                acc += e * e;
            });
            return acc * 2.0 * t * y;
        },
        0.0, 1.0, q);
}

/// Computed side of the kernel DDE at time t, on the block carrying u0:
/// sup_x |du/dt - Delta u0 / sqrt(8 pi t) - Delta^2 u / 8| with u = sum_y K_t(., y) u0(y)
/// and du/dt from the differentiated clock weight.
///
/// u0 is a zero-boundary field (zero outside its block); u is evaluated on a
/// block widened by the kernel support so the stencils are exact where the
/// residual is taken.
inline double dde_residual(double t, const LatticeField& u0, const QuadratureSpec& q = {}) {
    detail::check_time(t, "t");
    detail::check_field(u0);
    const LatticeSpec& s = u0.lattice;
    if (s.boundary != Boundary::zero) throw DomainError("dde residual needs a zero-boundary block");
    q.validate();
    const int d = s.d;
    const long n = s.half_width();
    const long N = n + btrw_support_radius(t, s.delta, q) + 2;
    const LatticeSpec wide{s.delta, d, (N + 0.5) * s.delta, Boundary::zero};
    if (wide.half_width() != N) throw DomainError("lattice widening failed");
    const std::size_t M = wide.site_count();

    const KernelBox k = btrw_kernel_box(t, s.delta, d, N + n, q);
    const KernelBox kt = btrw_kernel_box(t, s.delta, d, N + n, q, ClockWeight::time_deriv);
    LatticeField u = LatticeField::constant(wide, 0.0), ut = u, w0 = u;
    std::vector<long> off(d);
    for (std::size_t j = 0; j < u0.values.size(); ++j) {
        if (u0.values[j] == 0.0) continue;
        const auto yj = s.index_of(j);
        w0.values[wide.flat_of(yj)] = u0.values[j];
        for (std::size_t i = 0; i < M; ++i) {
            const auto xi = wide.index_of(i);
            for (int a = 0; a < d; ++a) off[a] = xi[a] - yj[a];
            u.values[i] += k.at(off) * u0.values[j];
            ut.values[i] += kt.at(off) * u0.values[j];
        }
    }
    const LatticeField lap0 = discrete_laplacian(w0);
    const LatticeField bil = discrete_bilaplacian(u);
    const double c = 1.0 / std::sqrt(8.0 * std::numbers::pi * t);
    double worst = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const auto xi = wide.index_of(i);
        bool inner = true;
        for (long a : xi) inner = inner && std::labs(a) <= N - 2;
        if (!inner) continue;
        worst = std::max(worst, std::abs(ut.values[i] - lap0.values[i] * c - bil.values[i] / 8.0));
    }
    return worst;
}

/// Continuous d = 1 analogue for u0(y) = exp(-y^2 / 2b): sup over xs of
/// |du/dt - u0'' / sqrt(8 pi t) - u'''' / 8|, with Gaussian derivatives in closed form.
inline double dde_residual_gaussian(double t, double b, std::span<const double> xs, const QuadratureSpec& q = {}) {
    detail::check_time(t, "t");
    detail::check_time(b, "bump width");
    q.validate();
    // derivatives of sqrt(b / c) exp(-x^2 / 2c), c = s + b
    auto g = [&](double c, double x, int order) {
        const double e = std::sqrt(b / c) * std::exp(-x * x / (2.0 * c));
        const double x2 = x * x / c;
        switch (order) {
            case 0: return e;
            case 2: return e * (x2 - 1.0) / c;
            default: return e * (x2 * x2 - 6.0 * x2 + 3.0) / (c * c);
        }
    };
    double worst = 0.0;
    const double c8 = 1.0 / std::sqrt(8.0 * std::numbers::pi * t);
    for (double x : xs) {
        const double ut = subordinate(t, [&](double s) { return g(s + b, x, 0); }, q, ClockWeight::time_deriv);
        const double u4 = subordinate(t, [&](double s) { return g(s + b, x, 4); }, q);
        worst = std::max(worst, std::abs(ut - g(b, x, 2) * c8 - u4 / 8.0));
    }
    return worst;
}

/// Relative deviation of K^BTRW_{t;[x],[y]} / (delta^d K^BTBM_{t;x,y}) from 1, maximised
/// over the (t, pair) grid, one value per delta. Pairs are off-diagonal points;
/// [x] is the lattice point below x.
inline EstimateReport asymptotic_check(std::span<const double> t_grid,
                                       const std::vector<std::pair<SpacePoint, SpacePoint>>& xy_grid,
                                       std::span<const double> delta_seq, int d, const QuadratureSpec& q = {}) {
    detail::check_estimate_dim(d);
    if (t_grid.empty() || xy_grid.empty() || delta_seq.empty()) throw DomainError("asymptotic check needs non-empty grids");
    for (const auto& [x, y] : xy_grid) {
        if (static_cast<int>(x.size()) != d || static_cast<int>(y.size()) != d) throw DomainError("point dimension mismatch");
        if (detail::squared_distance(x, y) == 0.0) throw DomainError("asymptotic check excludes x = y");
    }
    EstimateReport rep;
    rep.quantity = "btrw_btbm_ratio_deviation";
    rep.parameter_names = {"delta"};
    rep.criterion = Criterion::decreasing;
    rep.reference = 1.0;
    rep.reference_source = "exact";
    for (double delta : delta_seq) {
        const LatticeSpec lat = detail::whole_lattice(delta, d);
        double dev = 0.0;
        for (double t : t_grid) {
            for (const auto& [x, y] : xy_grid) {
                const double lat_k = btrw_density(t, floor_to_lattice(x, delta), floor_to_lattice(y, delta), lat, q);
                const double cont = btbm_density(t, x, y, q);
                dev = std::max(dev, std::abs(lat_k / (std::pow(delta, d) * cont) - 1.0));
            }
        }
        rep.parameters.push_back({delta});
        rep.values.push_back(dev);
    }
    return rep;
}

/// Ito-isometry variance of the additive-noise solution at site x of a zero-boundary
/// block: sum_{y in block} int_0^t K_s(x, y)^2 ds / delta^d.
inline double isometry_variance(double t, std::span<const long> x, const LatticeSpec& spec, const QuadratureSpec& q = {}) {
    detail::check_time(t, "t");
    spec.validate();
    if (!spec.truncated() || spec.boundary != Boundary::zero) throw DomainError("isometry variance needs a zero-boundary block");
    if (!spec.contains(x)) throw DomainError("site is outside the block");
    const int d = spec.d;
    const long n = spec.half_width();
    const std::size_t M = spec.site_count();
    std::vector<long> off(d);
    const double total = integrate(
        [&](double y) {
            const double s = t * y * y;
            if (s == 0.0) return 2.0 * t * y;
            const KernelBox box = btrw_kernel_box(s, spec.delta, d, 2 * n, q);
            double acc = 0.0;
            for (std::size_t j = 0; j < M; ++j) {
                const auto yj = spec.index_of(j);
                for (int a = 0; a < d; ++a) off[a] = x[a] - yj[a];
                const double k = box.at(off);
                acc += k * k;
            }
            return acc * 2.0 * t * y;
        },
        0.0, 1.0, q);
    return total / std::pow(spec.delta, d);
}

}  // namespace btp
