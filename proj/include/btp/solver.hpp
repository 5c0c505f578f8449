#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "btp/diffusion.hpp"
#include "btp/errors.hpp"
#include "btp/fft.hpp"
#include "btp/lattice.hpp"
#include "btp/noise.hpp"
#include "btp/parallel.hpp"
#include "btp/quadrature.hpp"

namespace btp {

/// Uniform time grid t_k = k dt, k = 0..steps.
struct TimeGrid {
    double dt = 1.0;
    std::size_t steps = 1;

    double horizon() const { return dt * static_cast<double>(steps); }
    double at(std::size_t k) const { return dt * static_cast<double>(k); }
    static TimeGrid dyadic(double horizon, int level) {
        const double dt = std::ldexp(1.0, -level);
        return TimeGrid{dt, static_cast<std::size_t>(std::llround(horizon / dt))};
    }
    bool operator==(const TimeGrid&) const = default;
};

/// Initial data: a constant, a function on all of delta Z^d, or a field
/// supported on the block (zero outside it).
struct InitialCondition {
    std::optional<double> constant;
    InitialFunction function;
    std::optional<LatticeField> field;

    static InitialCondition constant_value(double c) { return InitialCondition{c, {}, std::nullopt}; }
    static InitialCondition from_function(InitialFunction f) { return InitialCondition{std::nullopt, std::move(f), std::nullopt}; }
    static InitialCondition from_field(LatticeField f) { return InitialCondition{std::nullopt, {}, std::move(f)}; }

    LatticeField on(const LatticeSpec& spec) const {
        if (constant) return LatticeField::constant(spec, *constant);
        if (function) return LatticeField::from_function(spec, function);
        if (field) {
            if (!(field->lattice == spec)) throw DomainError("initial field lives on a different lattice");
            return *field;
        }
        throw ConfigError("empty initial condition");
    }

    LatticeField deterministic(double t, const LatticeSpec& spec, const QuadratureSpec& q) const {
        if (constant) return LatticeField::constant(spec, *constant);
        if (t == 0.0) return on(spec);
        if (spec.boundary == Boundary::periodic) return deterministic_part(t, on(spec), q);
        if (function) return deterministic_part(t, function, spec, q);
        return deterministic_part(t, on(spec), q);
    }
};

/// One replicate's solution on a time grid x block, with its deterministic part.
struct SolutionField {
    LatticeSpec lattice;
    std::vector<double> times;
    std::vector<double> values;  ///< [k * sites + i]
    std::vector<double> det;     ///< same layout, independent of the seed
    std::uint64_t replicate = 0;
    int iterations = 0;             ///< Picard iterations used (0 if not Picard)
    std::vector<double> residuals;  ///< Picard residual per iteration

    std::size_t sites() const { return lattice.site_count(); }
    double value(std::size_t k, std::size_t i) const { return values[k * sites() + i]; }
    double det_value(std::size_t k, std::size_t i) const { return det[k * sites() + i]; }
    double random_part(std::size_t k, std::size_t i) const { return value(k, i) - det_value(k, i); }
};

/// Immutable per-problem precomputation shared by all replicates: the
/// deterministic part on the grid and the kernel at every lag.
class SieProblem {
public:
    SieProblem(LatticeSpec spec, InitialCondition u0, DiffusionSpec a, TimeGrid grid, QuadratureSpec q = {},
               unsigned threads = 1)
        : spec_(std::move(spec)), u0_(std::move(u0)), a_(std::move(a)), grid_(grid), q_(q) {
        spec_.validate();
        q_.validate();
        if (!spec_.truncated()) throw DomainError("solvers need a truncated lattice");
        if (grid_.steps == 0 || !(grid_.dt > 0.0)) throw DomainError("time grid needs positive steps");
        a_.validate();
        M_ = spec_.site_count();
        n_ = spec_.half_width();
        const std::size_t S = grid_.steps;
        det_.resize((S + 1) * M_);
        parallel_for(S + 1, threads, [&](std::size_t k) {
            const auto f = u0_.deterministic(grid_.at(k), spec_, q_);
            std::copy(f.values.begin(), f.values.end(), det_.begin() + k * M_);
        });
        if (spec_.boundary == Boundary::periodic) {
            SpectralLattice sp(spec_);
            const std::vector<long> zero(spec_.d, 0);
            const std::size_t x0 = spec_.flat_of(zero);
            rows_.resize(S + 1);
            parallel_for(S + 1, threads, [&](std::size_t L) {
                const Eigen::MatrixXd K = sp.kernel(grid_.at(L));
                rows_[L].resize(M_);
                for (std::size_t y = 0; y < M_; ++y) rows_[L][y] = K(x0, y);
            });
        } else {
            boxes_.resize(S + 1);
            parallel_for(S + 1, threads, [&](std::size_t L) {
                boxes_[L] = btrw_kernel_box(grid_.at(L), spec_.delta, spec_.d, 2 * n_, q_);
            });
        }
        inv_sqrt_vol_ = std::pow(spec_.delta, -0.5 * spec_.d);
    }

    const LatticeSpec& spec() const { return spec_; }
    const InitialCondition& initial() const { return u0_; }
    const DiffusionSpec& diffusion() const { return a_; }
    const TimeGrid& grid() const { return grid_; }
    const QuadratureSpec& quad() const { return q_; }
    std::size_t sites() const { return M_; }
    const std::vector<double>& det() const { return det_; }
    double inv_sqrt_cell() const { return inv_sqrt_vol_; }

    /// K^BTRW at lag L * dt and lattice offset (wrapped on a torus).
    double kernel(std::size_t L, std::span<const long> offset) const {
        if (spec_.boundary == Boundary::periodic) {
            const long side = spec_.side();
            std::vector<long> w(offset.begin(), offset.end());
            for (long& v : w) v = ((v + n_) % side + side) % side - n_;
            return rows_[L][spec_.flat_of(w)];
        }
        return boxes_[L].at(offset);
    }

    /// Dense M x M kernel matrix at lag L.
    std::vector<double> kernel_matrix(std::size_t L) const {
        std::vector<double> K(M_ * M_);
        std::vector<long> off(spec_.d);
        for (std::size_t x = 0; x < M_; ++x) {
            const auto xi = spec_.index_of(x);
            for (std::size_t y = 0; y < M_; ++y) {
                const auto yi = spec_.index_of(y);
                for (int a = 0; a < spec_.d; ++a) off[a] = xi[a] - yi[a];
                K[x * M_ + y] = kernel(L, off);
            }
        }
        return K;
    }

    /// Brownian increments on the solver grid, [j * sites + y], j < steps.
    std::vector<double> increments(const NoiseSystem& noise, std::uint64_t replicate) const {
        const double ratio = grid_.dt / noise.base_dt();
        const auto m = static_cast<std::size_t>(std::llround(ratio));
        if (m == 0 || std::abs(ratio - m) > 1e-9 * ratio) throw DomainError("solver step must be a multiple of the noise step");
        if (m * grid_.steps > noise.steps()) throw DomainError("noise horizon shorter than the solver grid");
        std::vector<double> dw(grid_.steps * M_);
        for (std::size_t y = 0; y < M_; ++y) {
            const auto path = noise.path(spec_.coords_of(y), replicate, m);
            for (std::size_t j = 0; j < grid_.steps; ++j) dw[j * M_ + y] = path[j];
        }
        return dw;
    }

    const CausalConvolver& convolver() const {
        std::call_once(conv_once_, [&] {
            conv_ = std::make_unique<CausalConvolver>(grid_.steps, spec_.d, n_, spec_.boundary == Boundary::periodic,
                                                      [&](std::size_t L, std::span<const long> off) { return kernel(L, off); });
        });
        return *conv_;
    }

    SolutionField empty_field(std::uint64_t replicate) const {
        SolutionField f{spec_, {}, {}, det_, replicate, 0, {}};
        f.times.resize(grid_.steps + 1);
        for (std::size_t k = 0; k <= grid_.steps; ++k) f.times[k] = grid_.at(k);
        return f;
    }

    /// Applies the SIE right-hand side to a path: D + sum_{j<k} K_{k-j} a(U_j) dW_j / delta^{d/2}.
    std::vector<double> sie_map(std::span<const double> path, std::span<const double> dw) const {
        const std::size_t S = grid_.steps;
        std::vector<double> g(S * M_), out((S + 1) * M_);
        for (std::size_t j = 0; j < S; ++j)
            for (std::size_t y = 0; y < M_; ++y) g[j * M_ + y] = a_(path[j * M_ + y]) * dw[j * M_ + y] * inv_sqrt_vol_;
        convolver().apply(g, out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += det_[i];
        return out;
    }

private:
    LatticeSpec spec_;
    InitialCondition u0_;
    DiffusionSpec a_;
    TimeGrid grid_;
    QuadratureSpec q_;
    std::size_t M_ = 0;
    long n_ = 0;
    std::vector<double> det_;
    std::vector<KernelBox> boxes_;
    std::vector<std::vector<double>> rows_;
    double inv_sqrt_vol_ = 1.0;
    mutable std::once_flag conv_once_;
    mutable std::unique_ptr<CausalConvolver> conv_;
};

/// Picard iteration for the truncated BTRW SIE, starting from U^(0) = U_D.
///
/// The residual of an iterate is the largest over sites of the time-RMS
/// change from the previous iterate; iteration stops once it is below `tol`.
inline SolutionField picard_solve(const SieProblem& p, const NoiseSystem& noise, std::uint64_t replicate,
                                  int max_iter = 50, double tol = 1e-6) {
    if (!p.diffusion().lipschitz_const)
        throw ConfigError("picard_solve needs a Lipschitz coefficient; use euler_auxiliary_solve for '" +
                          p.diffusion().label + "'");
    const std::size_t S = p.grid().steps, M = p.sites();
    SolutionField f = p.empty_field(replicate);
    f.values = p.det();
    const auto dw = p.increments(noise, replicate);
    std::vector<double> g_prev;
    for (int it = 1; it <= max_iter; ++it) {
        std::vector<double> g(S * M);
        for (std::size_t j = 0; j < S * M; ++j) g[j] = p.diffusion()(f.values[j]) * dw[j] * p.inv_sqrt_cell();
        double res = 0.0;
        if (g != g_prev) {
            std::vector<double> next((S + 1) * M);
            p.convolver().apply(g, next);
            for (std::size_t i = 0; i < next.size(); ++i) next[i] += p.det()[i];
            for (std::size_t x = 0; x < M; ++x) {
                double ss = 0.0;
                for (std::size_t k = 0; k <= S; ++k) {
                    const double dv = next[k * M + x] - f.values[k * M + x];
                    ss += dv * dv;
                }
                res = std::max(res, std::sqrt(ss / static_cast<double>(S + 1)));
            }
            f.values = std::move(next);
        }
        f.residuals.push_back(res);
        f.iterations = it;
        if (res < tol) return f;
        g_prev = std::move(g);
    }
    throw ConvergenceError("picard_solve did not reach tol", f.residuals.back(), f.residuals);
}

/// Convenience overload matching the problem-level signature.
inline SolutionField picard_solve(const InitialCondition& u0, const DiffusionSpec& a, const NoiseSystem& noise,
                                  const LatticeSpec& spec, const TimeGrid& grid, int max_iter = 50, double tol = 1e-6,
                                  std::uint64_t replicate = 0, const QuadratureSpec& q = {}) {
    SieProblem p(spec, u0, a, grid, q);
    return picard_solve(p, noise, replicate, max_iter, tol);
}

namespace detail {

inline std::size_t steps_per_level(const SieProblem& p, int level_i) {
    const double h = std::ldexp(1.0, -level_i);
    const double r = h / p.grid().dt;
    const auto m = static_cast<std::size_t>(std::llround(r));
    if (m == 0 || std::abs(r - m) > 1e-9 * r) throw DomainError("Euler level step must be a multiple of the solver step");
    return m;
}

}  // namespace detail

/// Dyadic Euler scheme for the tau-auxiliary SIE. `tau_steps` is tau in solver
/// grid steps; the level-i step 2^-i must be a multiple of the solver step.
/// Returns X^tau on the level grid (last time = tau).
inline SolutionField euler_auxiliary_solve(const SieProblem& p, const NoiseSystem& noise, std::uint64_t replicate,
                                           std::size_t tau_steps, int level_i,
                                           const std::vector<double>* dw_cache = nullptr) {
    if (tau_steps == 0) throw DomainError("tau must be positive");
    if (tau_steps > p.grid().steps) throw DomainError("tau beyond the solver horizon");
    const std::size_t m = detail::steps_per_level(p, level_i), M = p.sites();
    std::vector<double> dw_local;
    if (!dw_cache) dw_local = p.increments(noise, replicate);
    const std::vector<double>& dw = dw_cache ? *dw_cache : dw_local;

    SolutionField f{p.spec(), {}, {}, {}, replicate, 0, {}};
    std::vector<double> X(p.det().begin(), p.det().begin() + M);
    auto push = [&](std::size_t b) {
        f.times.push_back(p.grid().at(b));
        f.values.insert(f.values.end(), X.begin(), X.end());
        f.det.insert(f.det.end(), p.det().begin() + b * M, p.det().begin() + (b + 1) * M);
    };
    push(0);
    std::vector<double> coef(M), inc(M);
    for (std::size_t b = 0; b < tau_steps;) {
        const std::size_t e = std::min(b + m, tau_steps);
        for (std::size_t y = 0; y < M; ++y) {
            double w = 0.0;
            for (std::size_t j = b; j < e; ++j) w += dw[j * M + y];
            coef[y] = p.diffusion()(X[y]) * w * p.inv_sqrt_cell();
        }
        const auto K = p.kernel_matrix(tau_steps - b);
        for (std::size_t x = 0; x < M; ++x) {
            double acc = 0.0;
            for (std::size_t y = 0; y < M; ++y) acc += K[x * M + y] * coef[y];
            inc[x] = acc + p.det()[e * M + x] - p.det()[b * M + x];
        }
        for (std::size_t x = 0; x < M; ++x) X[x] += inc[x];
        b = e;
        push(b);
    }
    return f;
}

/// Runs the auxiliary scheme for every tau in `tau_steps` on the same noise and
/// assembles U(tau, x) := X^tau(tau, x).
inline SolutionField auxiliary_sweep(const SieProblem& p, const NoiseSystem& noise, std::uint64_t replicate,
                                     const std::vector<std::size_t>& tau_steps, int level_i) {
    const std::size_t M = p.sites();
    const auto dw = p.increments(noise, replicate);
    SolutionField f{p.spec(), {}, {}, {}, replicate, 0, {}};
    for (std::size_t tau : tau_steps) {
        f.times.push_back(p.grid().at(tau));
        f.det.insert(f.det.end(), p.det().begin() + tau * M, p.det().begin() + (tau + 1) * M);
        if (tau == 0) {
            f.values.insert(f.values.end(), p.det().begin(), p.det().begin() + M);
            continue;
        }
        const auto path = euler_auxiliary_solve(p, noise, replicate, tau, level_i, &dw);
        f.values.insert(f.values.end(), path.values.end() - static_cast<long>(M), path.values.end());
    }
    return f;
}

/// Values U^{x,y}(s, t) of the parametrized system for one outer time t.
struct PsddeField {
    LatticeSpec lattice;
    double outer_time = 0.0;
    std::vector<double> s;
    std::vector<double> values;  ///< [(j * sites + x) * sites + y]

    double at(std::size_t j, std::size_t x, std::size_t y) const {
        const std::size_t M = lattice.site_count();
        return values[(j * M + x) * M + y];
    }
};

/// Output of `psdde_solve`: the field at the requested outer time and the
/// diagonal U^{x,x}(s, s) on the whole inner grid.
struct PsddeResult {
    PsddeField field;
    std::vector<double> diagonal;  ///< [j * sites + x]
    std::vector<double> increments;
};

/// Parametrized SDDE on a small torus, integrated in the eigenbasis of Delta_n.
///
/// Each non-constant mode obeys dV_k = (mu_k^2 / 8) V_k ds + dg_k and is shared
/// by every (x, t) system; only the constant mode feels the forcing
/// Delta_n V(s)(x) / sqrt(8 pi (t - s)). Noise enters at the left point of each
/// step and the drift is integrated exactly over the step (including the
/// integrable endpoint singularity), so the singular factor is never sampled.
inline PsddeResult psdde_solve(const LatticeField& u0, const DiffusionSpec& a, const NoiseSystem& noise, double t,
                               std::size_t steps, std::uint64_t replicate = 0) {
    detail::check_field(u0);
    const LatticeSpec& spec = u0.lattice;
    if (spec.boundary != Boundary::periodic) throw DomainError("psdde_solve runs on a periodic block");
    const std::size_t M = spec.site_count();
    std::size_t cap = 1;
    for (int i = 0; i < spec.d; ++i) cap *= 15;
    if (M > cap) throw ResourceError("psdde_solve is limited to 15^d sites");
    if (!(t > 0.0) || steps == 0) throw DomainError("psdde needs t > 0 and at least one step");
    a.validate();
    const double ds = t / static_cast<double>(steps);

    SpectralLattice sp(spec);
    const Eigen::VectorXd& mu = sp.eigenvalues();
    const Eigen::MatrixXd& phi = sp.modes();
    Eigen::Index k0 = 0;
    for (Eigen::Index k = 1; k < mu.size(); ++k)
        if (mu[k] < mu[k0]) k0 = k;
    const Eigen::Index K = mu.size();

    // E(L, k) = int over the step at lag L of exp(lambda_k r) / sqrt(8 pi (L ds - r)) dr
    const GaussRule& gl = gauss_legendre(16);
    Eigen::MatrixXd E(steps + 1, K);
    for (std::size_t L = 1; L <= steps; ++L) {
        const double lo = std::sqrt((L - 1) * ds), hi = std::sqrt(L * ds);
        const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
        for (Eigen::Index k = 0; k < K; ++k) {
            const double lam = mu[k] * mu[k] / 8.0;
            double acc = 0.0;
            for (std::size_t i = 0; i < gl.x.size(); ++i) {
                const double w = c + h * gl.x[i];
                acc += gl.w[i] * h * 2.0 * std::exp(lam * (L * ds - w * w));
            }
            E(L, k) = acc / std::sqrt(8.0 * std::numbers::pi);
        }
    }

    const double ratio = ds / noise.base_dt();
    const auto m = static_cast<std::size_t>(std::llround(ratio));
    if (m == 0 || std::abs(ratio - m) > 1e-9 * ratio || m * steps > noise.steps())
        throw DomainError("psdde step must be a multiple of the noise step within its horizon");
    std::vector<double> dw(steps * M);
    for (std::size_t y = 0; y < M; ++y) {
        const auto pth = noise.path(spec.coords_of(y), replicate, m);
        for (std::size_t j = 0; j < steps; ++j) dw[j * M + y] = pth[j];
    }
    const double inv_cell = std::pow(spec.delta, -0.5 * spec.d);
    const double phi0_sum = phi.col(k0).sum();

    Eigen::Map<const Eigen::VectorXd> u0v(u0.values.data(), static_cast<Eigen::Index>(M));
    Eigen::VectorXd Vhat = phi.transpose() * u0v;  // shared modes (mode k0 holds the constant part)
    double C0 = Vhat[k0];
    Eigen::MatrixXd W(steps, K);  // V_k(s_j) + g_k(j); the constant mode column holds g_k(j) only
    std::vector<double> diag((steps + 1) * M);
    std::copy(u0.values.begin(), u0.values.end(), diag.begin());

    Eigen::VectorXd g(M), ghat(K), gradient(K);
    for (std::size_t n = 0; n < steps; ++n) {
        for (std::size_t y = 0; y < M; ++y) g[y] = a(diag[n * M + y]) * dw[n * M + y] * inv_cell;
        ghat = phi.transpose() * g;
        for (Eigen::Index k = 0; k < K; ++k) {
            if (k == k0) {
                W(n, k) = ghat[k];
                continue;
            }
            W(n, k) = Vhat[k] + ghat[k];
            Vhat[k] = std::exp(mu[k] * mu[k] / 8.0 * ds) * W(n, k);
        }
        C0 += ghat[k0];
        // conv[k] = sum_{j<=n} E(n+1-j, k) W(j, k)
        for (Eigen::Index k = 0; k < K; ++k) {
            if (k == k0) continue;
            double acc = 0.0;
            for (std::size_t j = 0; j <= n; ++j) acc += E(n + 1 - j, k) * W(j, k);
            gradient[k] = -mu[k] * acc;
        }
        for (std::size_t x = 0; x < M; ++x) {
            double v = C0 * phi(x, k0), forcing = 0.0;
            for (Eigen::Index k = 0; k < K; ++k) {
                if (k == k0) continue;
                v += Vhat[k] * phi(x, k);
                forcing += gradient[k] * phi(x, k);
            }
            diag[(n + 1) * M + x] = v + phi0_sum * phi(x, k0) * forcing;
        }
    }

    // reconstruct the (x, y) field of the system with outer time t
    PsddeResult res;
    res.diagonal = std::move(diag);
    res.increments = std::move(dw);
    PsddeField& F = res.field;
    F.lattice = spec;
    F.outer_time = t;
    F.s.resize(steps + 1);
    F.values.assign((steps + 1) * M * M, 0.0);
    Eigen::VectorXd V = phi.transpose() * u0v;
    Eigen::VectorXd forcing_int = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M));
    double c0 = V[k0];
    for (std::size_t j = 0; j <= steps; ++j) {
        F.s[j] = j * ds;
        for (std::size_t x = 0; x < M; ++x)
            for (std::size_t y = 0; y < M; ++y) {
                double v = c0 * phi(y, k0) + phi0_sum * phi(y, k0) * forcing_int[x];
                for (Eigen::Index k = 0; k < K; ++k)
                    if (k != k0) v += V[k] * phi(y, k);
                F.values[(j * M + x) * M + y] = v;
            }
        if (j == steps) break;
        for (Eigen::Index k = 0; k < K; ++k) {
            if (k == k0) continue;
            const double w = W(j, k);
            for (std::size_t x = 0; x < M; ++x) forcing_int[x] += -mu[k] * phi(x, k) * E(steps - j, k) * w;
            V[k] = std::exp(mu[k] * mu[k] / 8.0 * ds) * w;
        }
        c0 += W(j, k0);
    }
    return res;
}

/// Output of the lattice SDDE solver.
struct SddeResult {
    SolutionField field;
    std::vector<double> increments;  ///< [j * sites + y]
};

/// Euler-Maruyama for dU = [Delta_n u0 / sqrt(8 pi t) + Delta_n^2 U / 8] dt + a(U) dW / delta^{d/2}
/// on a zero-padded block. The singular factor is sampled at step midpoints.
/// The deterministic part is the same scheme with a = 0.
inline SddeResult btp_spde_lattice_solve(const LatticeField& u0, const DiffusionSpec& a, const NoiseSystem& noise,
                                         const TimeGrid& grid, std::uint64_t replicate = 0) {
    detail::check_field(u0);
    a.validate();
    const LatticeSpec& spec = u0.lattice;
    const std::size_t M = spec.site_count(), S = grid.steps;
    const double ratio = grid.dt / noise.base_dt();
    const auto m = static_cast<std::size_t>(std::llround(ratio));
    if (m == 0 || std::abs(ratio - m) > 1e-9 * ratio || m * S > noise.steps())
        throw DomainError("SDDE step must be a multiple of the noise step within its horizon");
    SddeResult r;
    r.increments.resize(S * M);
    for (std::size_t y = 0; y < M; ++y) {
        const auto pth = noise.path(spec.coords_of(y), replicate, m);
        for (std::size_t j = 0; j < S; ++j) r.increments[j * M + y] = pth[j];
    }
    const auto lap0 = discrete_laplacian(u0);
    const double inv_cell = std::pow(spec.delta, -0.5 * spec.d);

    SolutionField& f = r.field;
    f.lattice = spec;
    f.replicate = replicate;
    f.times.resize(S + 1);
    f.values.resize((S + 1) * M);
    f.det.resize((S + 1) * M);
    LatticeField U = u0, D = u0;
    std::copy(u0.values.begin(), u0.values.end(), f.values.begin());
    std::copy(u0.values.begin(), u0.values.end(), f.det.begin());
    f.times[0] = 0.0;
    for (std::size_t k = 0; k < S; ++k) {
        const double cmid = 1.0 / std::sqrt(8.0 * std::numbers::pi * (k + 0.5) * grid.dt);
        const auto bU = discrete_bilaplacian(U), bD = discrete_bilaplacian(D);
        for (std::size_t x = 0; x < M; ++x) {
            const double drift0 = lap0.values[x] * cmid;
            const double noise_term = a(U.values[x]) * r.increments[k * M + x] * inv_cell;
            U.values[x] += (drift0 + bU.values[x] / 8.0) * grid.dt + noise_term;
            D.values[x] += (drift0 + bD.values[x] / 8.0) * grid.dt;
        }
        f.times[k + 1] = grid.at(k + 1);
        std::copy(U.values.begin(), U.values.end(), f.values.begin() + (k + 1) * M);
        std::copy(D.values.begin(), D.values.end(), f.det.begin() + (k + 1) * M);
    }
    return r;
}

/// Kernel-formulation residual of an SDDE path at its final time, per site:
///
///   U(t) - [ K_t u0 + sum_y Delta u0(y) int_0^t K_{t-s}/sqrt(8 pi s) ds
///            - int_0^t Delta U(s) / sqrt(8 pi (t - s)) ds + sum_j K_{t-s_j} a(U_j) dW_j / delta^{d/2} ]
///
/// with the killed-walk kernel of the zero-padded block. The path is read as
/// piecewise constant on the grid, so the memory integral uses exact cell
/// weights of the singular factor.
inline std::vector<double> sdde_kernel_residual(const SddeResult& run, const LatticeField& u0, const DiffusionSpec& a,
                                                const SpectralLattice& sp, const QuadratureSpec& q = {}) {
    const SolutionField& f = run.field;
    const std::size_t M = f.sites(), S = f.times.size() - 1;
    const double t = f.times.back(), dt = f.times[1] - f.times[0];
    const Eigen::VectorXd& mu = sp.eigenvalues();
    const Eigen::MatrixXd& phi = sp.modes();
    const Eigen::Index K = mu.size();
    const double c8 = 1.0 / std::sqrt(8.0 * std::numbers::pi);
    const double inv_cell = std::pow(f.lattice.delta, -0.5 * f.lattice.d);

    Eigen::Map<const Eigen::VectorXd> u0v(u0.values.data(), static_cast<Eigen::Index>(M));
    const auto lap0f = discrete_laplacian(u0);
    Eigen::Map<const Eigen::VectorXd> lap0(lap0f.values.data(), static_cast<Eigen::Index>(M));

    Eigen::VectorXd h1(K), h2(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        h1[k] = erfcx(mu[k] * std::sqrt(t / 8.0));
        h2[k] = integrate([&](double w) { return 2.0 * c8 * erfcx(mu[k] * std::sqrt((t - w * w) / 8.0)); }, 0.0,
                          std::sqrt(t), q);
    }
    Eigen::VectorXd rhs = phi * (h1.asDiagonal() * (phi.transpose() * u0v)) + phi * (h2.asDiagonal() * (phi.transpose() * lap0));

    Eigen::VectorXd noise_hat = Eigen::VectorXd::Zero(K), g(M);
    LatticeField Uj{f.lattice, std::vector<double>(M)};
    Eigen::VectorXd memory = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M));
    for (std::size_t j = 0; j < S; ++j) {
        std::copy(f.values.begin() + j * M, f.values.begin() + (j + 1) * M, Uj.values.begin());
        const auto lap = discrete_laplacian(Uj);
        const double wj = 2.0 * c8 * (std::sqrt(t - j * dt) - std::sqrt(std::max(0.0, t - (j + 1) * dt)));
        for (std::size_t x = 0; x < M; ++x) {
            memory[x] += lap.values[x] * wj;
            g[x] = a(Uj.values[x]) * run.increments[j * M + x] * inv_cell;
        }
        const Eigen::VectorXd gh = phi.transpose() * g;
        for (Eigen::Index k = 0; k < K; ++k) noise_hat[k] += erfcx(mu[k] * std::sqrt((t - j * dt) / 8.0)) * gh[k];
    }
    rhs += phi * noise_hat - memory;
    std::vector<double> res(M);
    for (std::size_t x = 0; x < M; ++x) res[x] = f.values[S * M + x] - rhs[x];
    return res;
}

/// Strong L^2 distance between the PSDDE diagonal and the BTRW SIE solution on
/// the same noise, one entry per inner step size.
struct PsddeLevelCheck {
    int level = 0;
    double rms = 0.0;        ///< sqrt(E mean_x |U^{x,x}(t, t) - U(t, x)|^2)
    double rms_stderr = 0.0;
    double estimate = 0.0;   ///< K_a sqrt(E a(U)^2 (ds / 2) / delta^d * isometry)
};

struct PsddeCheck {
    std::vector<PsddeLevelCheck> levels;
    double second_moment = 0.0;  ///< E|U^{x,x}(s, s)|^2 averaged over the coarsest grid
    double isometry = 0.0;       ///< sum_y int_0^t K_s(x, y)^2 ds / delta^d
    std::size_t count = 0;
};

/// Compares psdde_solve at step 2^-level for each level with a Picard solution of
/// the BTRW SIE at step 2^-reference_level, all driven by the same noise.
inline PsddeCheck psdde_diagonal_check(const LatticeField& u0, const DiffusionSpec& a, std::uint64_t seed, double t,
                                       const std::vector<int>& levels, int reference_level, std::size_t replicates,
                                       unsigned threads = 1) {
    if (levels.empty() || replicates < 2) throw DomainError("psdde check needs levels and at least two replicates");
    if (!a.lipschitz_const) throw ConfigError("psdde check needs a Lipschitz coefficient");
    for (int l : levels)
        if (l >= reference_level) throw DomainError("reference step must be finer than every checked step");
    const LatticeSpec& spec = u0.lattice;
    const std::size_t M = spec.site_count();
    const NoiseSystem noise = NoiseSystem::dyadic(seed, t, reference_level);
    const SieProblem ref(spec, InitialCondition::from_field(u0), a, TimeGrid::dyadic(t, reference_level), {}, threads);
    const std::size_t S = ref.grid().steps, L = levels.size();
    std::vector<double> mse(replicates * L), a2(replicates), u2(replicates);
    parallel_for(replicates, threads, [&](std::size_t r) {
        const SolutionField fine = picard_solve(ref, noise, r);
        for (std::size_t l = 0; l < L; ++l) {
            const auto steps = static_cast<std::size_t>(std::llround(std::ldexp(t, levels[l])));
            const PsddeResult run = psdde_solve(u0, a, noise, t, steps, r);
            double e = 0.0;
            for (std::size_t x = 0; x < M; ++x) {
                const double dv = run.diagonal[steps * M + x] - fine.values[S * M + x];
                e += dv * dv;
            }
            mse[r * L + l] = e / M;
            if (l == 0) {
                double sa = 0.0, su = 0.0;
                for (double v : run.diagonal) {
                    const double av = a(v);
                    sa += av * av;
                    su += v * v;
                }
                a2[r] = sa / run.diagonal.size();
                u2[r] = su / run.diagonal.size();
            }
        }
    });
    PsddeCheck out;
    out.count = replicates;
    const double n = static_cast<double>(replicates);
    double ea2 = 0.0;
    for (std::size_t r = 0; r < replicates; ++r) {
        ea2 += a2[r] / n;
        out.second_moment += u2[r] / n;
    }
    SpectralLattice sp(spec);
    double iso = 0.0;
    for (std::size_t x = 0; x < M; ++x) {
        const double v = integrate([&](double tau) { return sp.kernel(tau).row(static_cast<Eigen::Index>(x)).squaredNorm(); },
                                   0.0, t, {});
        iso = std::max(iso, v / std::pow(spec.delta, spec.d));
    }
    out.isometry = iso;
    for (std::size_t l = 0; l < L; ++l) {
        double m = 0.0, m2 = 0.0;
        for (std::size_t r = 0; r < replicates; ++r) {
            m += mse[r * L + l] / n;
            m2 += mse[r * L + l] * mse[r * L + l] / n;
        }
        PsddeLevelCheck c;
        c.level = levels[l];
        c.rms = std::sqrt(m);
        c.rms_stderr = c.rms > 0.0 ? std::sqrt(std::max(0.0, m2 - m * m) / (n - 1.0)) / (2.0 * c.rms) : 0.0;
        const double ds = std::ldexp(1.0, -levels[l]);
        c.estimate = *a.lipschitz_const * std::sqrt(ea2 * 0.5 * ds / std::pow(spec.delta, spec.d) * iso);
        out.levels.push_back(c);
    }
    return out;
}

/// RMS over replicates and sites of the SDDE kernel-formulation residual at the
/// final time, one entry per step 2^-level.
struct SddeStudy {
    std::vector<int> levels;
    std::vector<double> rms;
    std::vector<double> rms_stderr;
    std::size_t count = 0;
};

inline SddeStudy sdde_residual_study(const LatticeField& u0, const DiffusionSpec& a, std::uint64_t seed, double t,
                                     const std::vector<int>& levels, std::size_t replicates, unsigned threads = 1) {
    if (levels.empty() || replicates < 2) throw DomainError("sdde study needs levels and at least two replicates");
    const int finest = *std::max_element(levels.begin(), levels.end());
    const NoiseSystem noise = NoiseSystem::dyadic(seed, t, finest);
    const SpectralLattice killed(u0.lattice);
    const std::size_t L = levels.size(), M = u0.lattice.site_count();
    std::vector<double> mse(replicates * L);
    parallel_for(replicates, threads, [&](std::size_t r) {
        for (std::size_t l = 0; l < L; ++l) {
            const SddeResult run = btp_spde_lattice_solve(u0, a, noise, TimeGrid::dyadic(t, levels[l]), r);
            double e = 0.0;
            for (double v : sdde_kernel_residual(run, u0, a, killed)) e += v * v;
            mse[r * L + l] = e / M;
        }
    });
    SddeStudy out{levels, {}, {}, replicates};
    const double n = static_cast<double>(replicates);
    for (std::size_t l = 0; l < L; ++l) {
        double m = 0.0, m2 = 0.0;
        for (std::size_t r = 0; r < replicates; ++r) {
            m += mse[r * L + l] / n;
            m2 += mse[r * L + l] * mse[r * L + l] / n;
        }
        const double rms = std::sqrt(m);
        out.rms.push_back(rms);
        out.rms_stderr.push_back(rms > 0.0 ? std::sqrt(std::max(0.0, m2 - m * m) / (n - 1.0)) / (2.0 * rms) : 0.0);
    }
    return out;
}

}  // namespace btp
