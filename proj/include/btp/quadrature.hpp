#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "btp/errors.hpp"

namespace btp {

/// Quadrature controls shared by every kernel integral.
///
/// `node_count` is the Gauss-Legendre order used on each adaptive panel.
/// `tail_cutoff` is u_max in the Brownian clock variable u = s / sqrt(t);
/// the clock density is treated as zero beyond it.
struct QuadratureSpec {
    int node_count = 16;
    double tail_cutoff = 8.0;
    double rel_tol = 1e-8;
    int max_depth = 48;

    /// Gaussian clock mass discarded beyond `tail_cutoff`.
    double tail_mass() const { return std::erfc(tail_cutoff / std::numbers::sqrt2); }

    void validate() const {
        if (node_count < 1 || node_count > 512) throw DomainError("node_count must be in [1, 512]");
        if (!(tail_cutoff > 0.0)) throw DomainError("tail_cutoff must be positive");
        if (!(rel_tol > 0.0) || rel_tol >= 1.0) throw DomainError("rel_tol must be in (0, 1)");
        if (tail_mass() >= rel_tol) throw DomainError("tail_cutoff leaves clock mass above rel_tol");
    }

    QuadratureSpec doubled() const {
        QuadratureSpec q = *this;
        q.node_count *= 2;
        return q;
    }
    QuadratureSpec with_tol(double tol) const {
        QuadratureSpec q = *this;
        q.rel_tol = tol;
        return q;
    }

    bool operator==(const QuadratureSpec&) const = default;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};

namespace detail {

inline GaussRule build_gauss_legendre(int n) {
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        double w = 2.0 / ((1.0 - z * z) * dp * dp);
        r.x[i] = -z;
        r.x[n - 1 - i] = z;
        r.w[i] = w;
        r.w[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.x[n / 2] = 0.0;
    return r;
}

}  // namespace detail

/// Cached rule of order n. Rules are immutable once built.
inline const GaussRule& gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<GaussRule>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<GaussRule>(detail::build_gauss_legendre(n));
    return *slot;
}

/// Adaptive Gauss-Legendre integration of a vector-valued integrand.
///
/// `f(x, out)` writes m values. A panel is accepted when the order-n estimate
/// and the sum over its two halves agree to rel_tol, measured in max-norm
/// against the larger of the panel value and the panel's share of the total.
template <class F>
void integrate_vector(F&& f, double a, double b, std::size_t m, std::span<double> out,
                      const QuadratureSpec& q, int initial_panels = 4) {
    const GaussRule& rule = gauss_legendre(q.node_count);
    std::vector<double> fx(m);
    auto panel = [&](double lo, double hi, std::vector<double>& acc) {
        acc.assign(m, 0.0);
        const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
        for (std::size_t i = 0; i < rule.x.size(); ++i) {
            f(c + h * rule.x[i], std::span<double>(fx));
            const double wi = rule.w[i] * h;
            for (std::size_t j = 0; j < m; ++j) acc[j] += wi * fx[j];
        }
    };
    auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s = std::max(s, std::abs(x));
        return s;
    };

    std::fill(out.begin(), out.end(), 0.0);
    if (a == b) return;
    const double width = b - a;

    struct Item {
        double lo, hi;
        int depth;
        std::vector<double> value;
    };
    std::vector<Item> stack;
    std::vector<double> total(m, 0.0);
    for (int p = initial_panels - 1; p >= 0; --p) {
        double lo = a + width * p / initial_panels, hi = a + width * (p + 1) / initial_panels;
        Item it{lo, hi, 0, {}};
        panel(lo, hi, it.value);
        for (std::size_t j = 0; j < m; ++j) total[j] += it.value[j];
        stack.push_back(std::move(it));
    }
    const double scale = norm(total);

    double unresolved = 0.0;
    std::vector<double> left, right;
    while (!stack.empty()) {
        Item it = std::move(stack.back());
        stack.pop_back();
        const double mid = 0.5 * (it.lo + it.hi);
        panel(it.lo, mid, left);
        panel(mid, it.hi, right);
        double err = 0.0, mag = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double both = left[j] + right[j];
            err = std::max(err, std::abs(both - it.value[j]));
            mag = std::max(mag, std::abs(both));
        }
        const double share = scale * (it.hi - it.lo) / std::abs(width);
        const double tol = q.rel_tol * std::max(mag, share);
        if (err <= tol || (mag == 0.0 && err == 0.0)) {
            for (std::size_t j = 0; j < m; ++j) out[j] += left[j] + right[j];
        } else if (it.depth >= q.max_depth) {
            unresolved += err;
            for (std::size_t j = 0; j < m; ++j) out[j] += left[j] + right[j];
        } else {
            stack.push_back(Item{mid, it.hi, it.depth + 1, right});
            stack.push_back(Item{it.lo, mid, it.depth + 1, left});
        }
    }
    double final_scale = 0.0;
    for (double v : out) final_scale = std::max(final_scale, std::abs(v));
    if (unresolved > 10.0 * q.rel_tol * std::max(final_scale, 1e-300)) {
        throw ConvergenceError("adaptive quadrature did not reach rel_tol",
                               unresolved / std::max(final_scale, 1e-300));
    }
}

/// Scalar convenience wrapper over `integrate_vector`.
template <class F>
double integrate(F&& f, double a, double b, const QuadratureSpec& q, int initial_panels = 4) {
    double result = 0.0;
    integrate_vector([&](double x, std::span<double> o) { o[0] = f(x); }, a, b, 1,
                     std::span<double>(&result, 1), q, initial_panels);
    return result;
}

}  // namespace btp
