#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "btp/errors.hpp"
#include "btp/estimates.hpp"
#include "btp/kernels.hpp"
#include "btp/lattice.hpp"

// The named estimate sweeps run by `btp verify`.

namespace btp {

/// Published values of the squared kernel L^2 norm at t = 1 for d = 1, 2, 3.
inline constexpr double kPublishedL2[3] = {0.3656, 0.1584, 0.0972};

struct CheckResult {
    std::string name;
    std::string property;  ///< what is being verified, in words
    EstimateReport report;
};

namespace detail {

inline std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    return out;
}

}  // namespace detail

inline CheckResult check_l2(int d, const QuadratureSpec& q = {}) {
    detail::check_estimate_dim(d);
    EstimateReport r;
    r.quantity = "l2_kernel_norm";
    r.parameter_names = {"t"};
    r.parameters = {{1.0}};
    r.values = {l2_kernel_norm(1.0, d, KernelMode::continuous(), q)};
    r.criterion = Criterion::within;
    r.reference = kPublishedL2[d - 1];
    r.reference_source = "published";
    r.tolerance = 2e-3;
    return {"l2", "squared kernel L2 norm at t = 1 against the published constant", r};
}

inline CheckResult check_scaling(int d, const QuadratureSpec& q = {}) {
    detail::check_estimate_dim(d);
    EstimateReport r;
    r.quantity = "l2_kernel_norm_scaled";
    r.parameter_names = {"t"};
    for (double t : detail::log_grid(0.01, 100.0, 9)) {
        r.parameters.push_back({t});
        r.values.push_back(l2_kernel_norm(t, d, KernelMode::continuous(), q) * std::pow(t, 0.25 * d));
    }
    r.criterion = Criterion::bounded_ratio;
    r.reference = r.values.front();
    r.reference_source = "exact";
    r.tolerance = 1e-6;
    return {"scaling", "||K_t||^2 t^{d/4} is constant in t", r};
}

inline CheckResult check_dde(const QuadratureSpec& q = {}) {
    const LatticeField u0 = LatticeField::indicator(make_lattice(0.25, 1, 0.25));
    EstimateReport r;
    r.quantity = "dde_residual";
    r.parameter_names = {"t"};
    for (double t : {0.5, 1.0, 2.0}) {
        r.parameters.push_back({t});
        r.values.push_back(dde_residual(t, u0, q));
    }
    r.criterion = Criterion::below;
    r.reference = 1e-6;
    r.reference_source = "exact";
    return {"dde", "lattice kernel solves its differential-difference equation (d = 1, delta = 0.25)", r};
}

inline CheckResult check_temporal(int d, const QuadratureSpec& q = {}) {
    detail::check_estimate_dim(d);
    EstimateReport r;
    r.quantity = "temporal_difference_integral";
    r.parameter_names = {"t", "h"};
    std::vector<double> hs = detail::log_grid(1e-3, 1e-1, 9);
    for (double h : hs) {
        r.parameters.push_back({1.0, h});
        r.values.push_back(temporal_difference_integral(1.0 - h, 1.0, d, KernelMode::continuous(), q));
    }
    r.fit = fit_loglog(hs, r.values);
    r.criterion = Criterion::slope;
    r.reference = (4.0 - d) / 4.0;
    r.reference_source = "published";
    r.tolerance = 0.05;
    return {"temporal", "log-log slope of the temporal kernel difference in t - r", r};
}

inline CheckResult check_twobt(const QuadratureSpec& q = {}) {
    QuadratureSpec fine = q;
    fine.rel_tol = std::min(q.rel_tol, 1e-11);
    const double via = temporal_difference_integral(0.5, 1.0, 1, KernelMode::lattice(0.25), fine);
    const double direct = temporal_difference_direct(0.5, 1.0, 0.25, 1, fine);
    EstimateReport r;
    r.quantity = "two_brownian_times_identity";
    r.parameter_names = {"r", "t", "delta"};
    r.parameters = {{0.5, 1.0, 0.25}};
    r.values = {std::abs(via - direct) / std::abs(direct)};
    r.criterion = Criterion::below;
    r.reference = 1e-8;
    r.reference_source = "exact";
    return {"twobt", "2-Brownian-times density route equals direct lattice summation", r};
}

/// d = 1: value / (|z|^2 t^{1/4}); d = 3: value / |z|^{0.9}. Bounded means the
/// ratio varies by less than 50% over the sweep.
inline CheckResult check_spatial(int d, const QuadratureSpec& q = {}) {
    if (d != 1 && d != 3) throw DomainError("spatial check is defined for d = 1 and d = 3");
    EstimateReport r;
    r.quantity = "spatial_difference_ratio";
    r.parameter_names = {"t", "z"};
    for (double t : {0.5, 1.0, 2.0})
        for (int k = 0; k <= 6; ++k) {
            const double z = std::pow(10.0, -3.0 + 0.5 * k);
            std::vector<double> zv(d, 0.0);
            zv[0] = z;
            const double v = spatial_difference_integral(zv, t, KernelMode::continuous(), q);
            r.parameters.push_back({t, z});
            r.values.push_back(d == 1 ? v / (z * z * std::pow(t, 0.25)) : v / std::pow(z, 0.9));
        }
    r.criterion = Criterion::bounded_ratio;
    r.reference = 1.0;
    r.reference_source = "published";
    r.tolerance = 0.5;
    return {"spatial", d == 1 ? "spatial kernel difference over |z|^2 t^{1/4} is bounded" : "spatial kernel difference over |z|^{0.9} is bounded", r};
}

inline CheckResult check_asymptotic(const QuadratureSpec& q = {}) {
    const std::vector<double> ts{1.0};
    std::vector<std::pair<SpacePoint, SpacePoint>> xy;
    for (double s : {0.5, 1.0, 2.0}) xy.push_back({SpacePoint{0.0}, SpacePoint{s}});
    const std::vector<double> deltas{0.2, 0.1, 0.05};
    EstimateReport r = asymptotic_check(ts, xy, deltas, 1, q);
    return {"asymptotic", "lattice kernel over delta^d times the continuum kernel tends to 1", r};
}

inline const std::vector<std::string>& check_names() {
    static const std::vector<std::string> names{"l2", "scaling", "dde", "temporal", "twobt", "spatial", "asymptotic"};
    return names;
}

/// Runs the named check; `d` is ignored by the dimension-free checks.
inline CheckResult run_check(const std::string& name, int d, const QuadratureSpec& q = {}) {
    if (name == "l2") return check_l2(d, q);
    if (name == "scaling") return check_scaling(d, q);
    if (name == "dde") return check_dde(q);
    if (name == "temporal") return check_temporal(d, q);
    if (name == "twobt") return check_twobt(q);
    if (name == "spatial") return check_spatial(d, q);
    if (name == "asymptotic") return check_asymptotic(q);
    throw ConfigError("unknown check '" + name + "'");
}

}  // namespace btp
