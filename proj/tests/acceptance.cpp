// Acceptance criteria, one PASS/FAIL line each. `acceptance --only N` runs one
// criterion and exits non-zero when it fails; without arguments all run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "btp/checks.hpp"
#include "btp/estimates.hpp"
#include "btp/kernels.hpp"
#include "btp/lattice.hpp"
#include "btp/montecarlo.hpp"
#include "btp/solver.hpp"

using namespace btp;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Item {
    int id;
    const char* title;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome anchor() {
    const double ref = std::tgamma(0.25) * std::pow(2.0, -0.75) / std::numbers::pi;
    double worst = 0.0;
    for (double t : {0.1, 1.0, 10.0}) worst = std::max(worst, std::abs(btbm_density_r2(t, 0.0, 1) * std::pow(t, 0.25) / ref - 1.0));
    return {worst < 1e-6, fmt("K(t,0,0) t^{1/4} vs %.10f, max rel err %.2e (tol 1e-6)", ref, worst)};
}

Outcome constants() {
    bool ok = true;
    std::string d;
    for (int k = 1; k <= 3; ++k) {
        const auto c = check_l2(k);
        ok = ok && c.report.passed();
        d += fmt("d=%d %.6f vs %.4f; ", k, c.report.values[0], c.report.reference);
    }
    return {ok, d + "tol 2e-3 abs"};
}

Outcome scaling() {
    bool ok = true;
    double worst = 0.0;
    for (int k = 1; k <= 3; ++k) {
        const auto c = check_scaling(k);
        ok = ok && c.report.passed();
        const auto [lo, hi] = std::minmax_element(c.report.values.begin(), c.report.values.end());
        worst = std::max(worst, *hi / *lo - 1.0);
    }
    return {ok, fmt("max spread of ||K_t||^2 t^{d/4} over t in [0.01, 100]: %.2e (tol 1e-6)", worst)};
}

Outcome dde() {
    const LatticeField u0 = LatticeField::indicator(make_lattice(0.25, 1, 0.25));
    bool ok = true;
    std::string d;
    for (double t : {0.5, 1.0, 2.0}) {
        const double def = dde_residual(t, u0);
        ok = ok && def < 1e-6;
        // node doubling from a coarse rule
        QuadratureSpec q;
        q.rel_tol = 1e-4;
        std::vector<double> seq;
        for (int n : {2, 4, 8, 16}) {
            q.node_count = n;
            seq.push_back(dde_residual(t, u0, q));
        }
        for (std::size_t i = 1; i < seq.size(); ++i) ok = ok && seq[i] < seq[i - 1];
        d += fmt("t=%g res %.1e, doubling %.1e>%.1e>%.1e>%.1e; ", t, def, seq[0], seq[1], seq[2], seq[3]);
    }
    return {ok, d + "tol 1e-6"};
}

Outcome temporal() {
    bool ok = true;
    std::string d;
    for (int k = 1; k <= 3; ++k) {
        const auto c = check_temporal(k);
        const double slope = c.report.fit->slope, ref = (4.0 - k) / 4.0;
        ok = ok && std::abs(slope - ref) < 0.05;
        d += fmt("d=%d slope %.4f vs %.2f; ", k, slope, ref);
    }
    const auto tb = check_twobt();
    ok = ok && tb.report.values[0] < 1e-8;
    return {ok, d + fmt("2-BT identity rel diff %.1e (tol 1e-8); slope tol 0.05", tb.report.values[0])};
}

Outcome spatial() {
    bool ok = true;
    std::string d;
    for (int k : {1, 3}) {
        const auto c = check_spatial(k);
        const auto [lo, hi] = std::minmax_element(c.report.values.begin(), c.report.values.end());
        ok = ok && *hi / *lo < 1.5;
        d += fmt("d=%d ratio in [%.3f, %.3f], max/min %.2f; ", k, *lo, *hi, *hi / *lo);
    }
    return {ok, d + "tol max/min < 1.5"};
}

Outcome asymptotic() {
    const auto c = check_asymptotic();
    const auto& v = c.report.values;
    return {c.report.passed(), fmt("deviation %.5f, %.5f, %.5f at delta 0.2, 0.1, 0.05 (strictly decreasing)", v[0], v[1], v[2])};
}

Outcome cross_validation() {
    const LatticeSpec spec = make_lattice(0.25, 1, 4.0);
    const int ref_level = 12;
    const SieProblem p(spec, InitialCondition::constant_value(1.0), make_diffusion("linear", 0.5), TimeGrid::dyadic(1.0, ref_level));
    const NoiseSystem noise(2024, p.grid().dt, p.grid().steps);
    const std::size_t N = 200, M = p.sites(), S = p.grid().steps;
    const std::vector<int> levels{6, 8, 10};
    std::vector<double> err(levels.size(), 0.0);
    double worst_ratio = 0.0;
    for (std::size_t r = 0; r < N; ++r) {
        const SolutionField pic = picard_solve(p, noise, r, 60, 1e-11);
        for (std::size_t i = 3; i < pic.residuals.size(); ++i)
            if (pic.residuals[i - 1] > 1e-12) worst_ratio = std::max(worst_ratio, pic.residuals[i] / pic.residuals[i - 1]);
        for (std::size_t l = 0; l < levels.size(); ++l) {
            const SolutionField e = auxiliary_sweep(p, noise, r, {S}, levels[l]);
            for (std::size_t x = 0; x < M; ++x) err[l] += std::pow(e.values[x] - pic.values[S * M + x], 2) / (N * M);
        }
    }
    for (double& e : err) e = std::sqrt(e);
    const SieProblem p2(spec, InitialCondition::constant_value(1.0), make_diffusion("linear", 0.5), TimeGrid::dyadic(1.0, ref_level), {}, 2);
    const bool repro = picard_solve(p, noise, 7, 60, 1e-11).values == picard_solve(p, noise, 7, 60, 1e-11).values &&
                       picard_solve(p, noise, 7, 60, 1e-11).values == picard_solve(p2, noise, 7, 60, 1e-11).values;
    const bool ok = worst_ratio < 0.9 && err[0] > err[1] && err[1] > err[2] && repro;
    return {ok, fmt("Picard max residual ratio after iterate 3: %.3f (tol 0.9); L2 Euler-Picard at i=6,8,10: %.3e, %.3e, %.3e; "
                    "bit-identical reruns: %s",
                    worst_ratio, err[0], err[1], err[2], repro ? "yes" : "no")};
}

Outcome isometry() {
    const LatticeSpec spec = make_lattice(0.25, 1, 4.0);
    const SieProblem p(spec, InitialCondition::constant_value(0.0), make_diffusion("one"), TimeGrid::dyadic(1.0, 8));
    const NoiseSystem noise(99, p.grid().dt, p.grid().steps);
    const std::size_t N = 500, M = p.sites(), S = p.grid().steps;
    const std::vector<long> sites{0, 4, 12};
    std::vector<double> s1(sites.size()), s2(sites.size()), s4(sites.size());
    for (std::size_t r = 0; r < N; ++r) {
        const SolutionField f = picard_solve(p, noise, r);
        for (std::size_t k = 0; k < sites.size(); ++k) {
            const std::vector<long> idx{sites[k]};
            const double v = f.values[S * M + spec.flat_of(idx)];
            s1[k] += v;
            s2[k] += v * v;
            s4[k] += v * v * v * v;
        }
    }
    bool ok = true;
    std::string d;
    for (std::size_t k = 0; k < sites.size(); ++k) {
        const double n = static_cast<double>(N), m = s1[k] / n;
        const double var = (s2[k] - n * m * m) / (n - 1.0);
        const double se = std::sqrt(std::max(0.0, s4[k] / n - std::pow(s2[k] / n, 2)) / n);
        const std::vector<long> idx{sites[k]};
        const double iso = isometry_variance(1.0, idx, spec);
        ok = ok && std::abs(var - iso) < 3.0 * se;
        d += fmt("x=%g var %.4f vs %.4f (se %.4f); ", sites[k] * spec.delta, var, iso, se);
    }
    return {ok, d + "tol 3 stderr"};
}

Outcome psdde() {
    const LatticeSpec spec = make_lattice(0.5, 1, 2.0, Boundary::periodic);
    const auto u0 = LatticeField::from_function(spec, [](std::span<const double> x) {
        return 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * x[0] / 4.5);
    });
    const PsddeCheck c = psdde_diagonal_check(u0, make_diffusion("linear", 0.5), 7, 0.5, {10, 12}, 14, 300);
    const auto& a = c.levels[0];
    const auto& b = c.levels[1];
    const double ratio = a.rms / b.rms;
    const bool ok = a.rms < 3.0 * a.estimate && std::abs(ratio / 2.0 - 1.0) <= 0.3;
    return {ok, fmt("rms at ds=2^-10 %.3e vs 3 x estimate %.3e; rms at 2^-12 %.3e, ratio %.3f (target 2 +- 30%%)", a.rms,
                    3.0 * a.estimate, b.rms, ratio)};
}

Outcome holder() {
    HolderExperiment e1;
    e1.d = 1;
    e1.delta = 1.0 / 256.0;
    HolderExperiment e2;
    e2.d = 2;
    e2.delta = 1.0 / 16.0;
    const HolderResult r1 = run_holder_experiment(e1), r2 = run_holder_experiment(e2);
    const bool t1 = r1.time.passed(0.08), t2 = r2.time.passed(0.08);
    const bool sp = r1.space && r1.space->fit.slope >= 1.8;
    const bool order = r1.time.fit.slope > r2.time.fit.slope;
    return {t1 && t2 && sp && order,
            fmt("time slope d=1 %.3f +- %.3f vs 0.75, d=2 %.3f +- %.3f vs 0.50 (tol 0.08 + 2 se); space slope d=1 %.3f (>= 1.8); "
                "d-ordering %s; d=3 skipped (optional, slow)",
                r1.time.fit.slope, r1.time.fit.slope_stderr, r2.time.fit.slope, r2.time.fit.slope_stderr,
                r1.space ? r1.space->fit.slope : std::nan(""), order ? "decreasing" : "not decreasing")};
}

Outcome sdde() {
    const LatticeSpec spec = make_lattice(1.0, 1, 8.0);
    const auto u0 = LatticeField::from_function(spec, [](std::span<const double> x) { return std::exp(-x[0] * x[0] / 2.0); });
    const SddeStudy st = sdde_residual_study(u0, make_diffusion("linear", 0.5), 5, 1.0, {10, 11, 12, 13}, 60);
    std::vector<double> dt;
    for (int l : st.levels) dt.push_back(std::ldexp(1.0, -l));
    const SlopeFit f = fit_loglog(dt, st.rms);
    return {std::abs(f.slope - 0.5) <= 0.15,
            fmt("rms %.3e, %.3e, %.3e, %.3e at dt=2^-10..2^-13; fitted order %.3f (target 0.5 +- 0.15)", st.rms[0], st.rms[1],
                st.rms[2], st.rms[3], f.slope)};
}

const std::vector<Item>& criteria() {
    static const std::vector<Item> all{
        {1, "closed-form diagonal anchor", 1.0, anchor},
        {2, "kernel L2 constants", 5.0, constants},
        {3, "exact L2 scaling", 5.0, scaling},
        {4, "lattice kernel differential-difference equation", 10.0, dde},
        {5, "temporal-difference exponent and 2-BT identity", 60.0, temporal},
        {6, "spatial-difference boundedness", 60.0, spatial},
        {7, "lattice-to-continuum asymptotics", 30.0, asymptotic},
        {8, "solver cross-validation", 600.0, cross_validation},
        {9, "additive-noise variance", 300.0, isometry},
        {10, "PSDDE diagonal", 600.0, psdde},
        {11, "Hoelder regularity", 1200.0, holder},
        {12, "degenerate SDDE residual order", 300.0, sdde},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    app.add_option("--only", only, "criterion number (repeatable)")->check(CLI::Range(1, 12));
    CLI11_PARSE(app, argc, argv);

    bool all_pass = true;
    for (const auto& c : criteria()) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs < c.budget_s;
        all_pass = all_pass && pass;
        std::printf("%s [%d] %s: %s (%.2f s, budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs,
                    c.budget_s);
        std::fflush(stdout);
    }
    return all_pass ? 0 : 1;
}
