#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "btp/errors.hpp"
#include "btp/kernels.hpp"
#include "btp/parallel.hpp"
#include "btp/quadrature.hpp"
#include "btp/special.hpp"

namespace btp {

/// Treatment of sites outside a truncated block.
enum class Boundary {
    zero,     ///< fields vanish outside the block
    periodic  ///< the block is a torus
};

/// The lattice delta Z^d, optionally truncated to [-l, l]^d.
struct LatticeSpec {
    double delta = 1.0;
    int d = 1;
    std::optional<double> trunc_radius;
    Boundary boundary = Boundary::zero;

    bool truncated() const { return trunc_radius.has_value(); }

    /// floor(l / delta), with a small guard so l = k delta is not lost to rounding.
    long half_width() const {
        if (!truncated()) throw DomainError("lattice is not truncated");
        return static_cast<long>(std::floor(*trunc_radius / delta + 1e-9));
    }
    long side() const { return 2 * half_width() + 1; }
    std::size_t site_count() const {
        std::size_t n = 1;
        for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(side());
        return n;
    }

    void validate() const {
        if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("lattice spacing must be positive");
        if (d < 1) throw DomainError("dimension must be >= 1");
        if (truncated() && !(*trunc_radius >= delta * (1.0 - 1e-12)))
            throw DomainError("truncation radius must be >= delta");
        if (boundary == Boundary::periodic && !truncated())
            throw DomainError("periodic boundary needs a truncated lattice");
    }

    /// Lattice index vector of flat site number `flat` (first coordinate slowest).
    std::vector<long> index_of(std::size_t flat) const {
        const long n = half_width(), s = side();
        std::vector<long> idx(d);
        for (int i = d - 1; i >= 0; --i) {
            idx[i] = static_cast<long>(flat % s) - n;
            flat /= s;
        }
        return idx;
    }
    std::size_t flat_of(std::span<const long> idx) const {
        const long n = half_width(), s = side();
        std::size_t f = 0;
        for (int i = 0; i < d; ++i) f = f * s + static_cast<std::size_t>(idx[i] + n);
        return f;
    }
    bool contains(std::span<const long> idx) const {
        const long n = half_width();
        for (long v : idx)
            if (v < -n || v > n) return false;
        return true;
    }
    std::vector<double> coords_of(std::size_t flat) const {
        auto idx = index_of(flat);
        std::vector<double> c(d);
        for (int i = 0; i < d; ++i) c[i] = idx[i] * delta;
        return c;
    }

    bool operator==(const LatticeSpec&) const = default;
};

inline LatticeSpec make_lattice(double delta, int d, std::optional<double> l = std::nullopt,
                                Boundary b = Boundary::zero) {
    LatticeSpec s{delta, d, l, b};
    s.validate();
    return s;
}

/// A site of delta Z^d; coordinates are index * spacing.
struct LatticePoint {
    std::vector<long> index;
    double spacing = 1.0;

    std::vector<double> coords() const {
        std::vector<double> c(index.size());
        for (std::size_t i = 0; i < index.size(); ++i) c[i] = index[i] * spacing;
        return c;
    }
};

/// Coordinate-wise [x]_delta = delta * floor(x / delta). A relative guard of
/// 1e-9 keeps exact multiples such as 0.5 / 0.1 on their own site.
inline LatticePoint floor_to_lattice(std::span<const double> x, double delta) {
    LatticePoint p{std::vector<long>(x.size()), delta};
    for (std::size_t i = 0; i < x.size(); ++i) p.index[i] = static_cast<long>(std::floor(x[i] / delta + 1e-9));
    return p;
}

/// One value per site of a truncated lattice.
struct LatticeField {
    LatticeSpec lattice;
    std::vector<double> values;

    static LatticeField constant(const LatticeSpec& s, double c) {
        return LatticeField{s, std::vector<double>(s.site_count(), c)};
    }
    static LatticeField from_function(const LatticeSpec& s, const std::function<double(std::span<const double>)>& f) {
        LatticeField out{s, std::vector<double>(s.site_count())};
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(s.coords_of(i));
        return out;
    }
    /// Indicator of the origin, the kernel's own initial condition.
    static LatticeField indicator(const LatticeSpec& s) {
        LatticeField out = constant(s, 0.0);
        std::vector<long> zero(s.d, 0);
        out.values[s.flat_of(zero)] = 1.0;
        return out;
    }
    double at(std::span<const long> idx) const { return values[lattice.flat_of(idx)]; }
};

namespace detail {

inline void check_field(const LatticeField& f) {
    if (f.values.empty()) throw DomainError("empty lattice field");
    if (!f.lattice.truncated()) throw DomainError("lattice fields live on truncated lattices");
    if (f.values.size() != f.lattice.site_count()) throw DomainError("field size does not match lattice");
}

}  // namespace detail

/// Central second difference summed over coordinates (zero-padded or periodic).
inline LatticeField discrete_laplacian(const LatticeField& f) {
    detail::check_field(f);
    const LatticeSpec& s = f.lattice;
    const long n = s.half_width(), side = s.side();
    const double inv = 1.0 / (s.delta * s.delta);
    LatticeField out{s, std::vector<double>(f.values.size(), 0.0)};
    std::size_t stride = 1;
    for (int axis = s.d - 1; axis >= 0; --axis) {
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            const long c = static_cast<long>((i / stride) % side) - n;
            const double v = f.values[i];
            double up = 0.0, dn = 0.0;
            if (c < n) up = f.values[i + stride];
            else if (s.boundary == Boundary::periodic) up = f.values[i - (side - 1) * stride];
            if (c > -n) dn = f.values[i - stride];
            else if (s.boundary == Boundary::periodic) dn = f.values[i + (side - 1) * stride];
            out.values[i] += (up - 2.0 * v + dn) * inv;
        }
        stride *= side;
    }
    return out;
}

/// Discrete Laplacian applied twice.
inline LatticeField discrete_bilaplacian(const LatticeField& f) { return discrete_laplacian(discrete_laplacian(f)); }

namespace detail {

inline void check_points(const LatticePoint& x, const LatticePoint& y, const LatticeSpec& spec) {
    if (x.spacing != spec.delta || y.spacing != spec.delta) throw DomainError("points belong to a different lattice");
    if (x.index.size() != static_cast<std::size_t>(spec.d) || y.index.size() != x.index.size())
        throw DomainError("point dimension does not match lattice");
}

/// Fills out[j] = prod_i row[k_i(j)] over the (R+1)^d nonnegative offsets.
inline void fill_product_box(const std::vector<double>& row, int d, long R, std::span<double> out) {
    const std::size_t w = static_cast<std::size_t>(R + 1);
    if (d == 1) {
        for (std::size_t k = 0; k < w; ++k) out[k] = row[k];
        return;
    }
    std::size_t len = w;
    for (std::size_t k = 0; k < w; ++k) out[k] = row[k];
    for (int axis = 1; axis < d; ++axis) {
        // expand in place from the back: new[a*len + b] = row[a] * old[b]
        for (std::size_t a = w; a-- > 0;)
            for (std::size_t b = len; b-- > 0;) out[a * len + b] = row[a] * out[b];
        len *= w;
    }
}

}  // namespace detail

/// Continuous-time walk with generator Delta_n / 2: product over coordinates of
/// e^{-t/delta^2} I_{|k_i|}(t/delta^2).
inline double rw_density(double t, const LatticePoint& x, const LatticePoint& y, const LatticeSpec& spec) {
    if (!(t >= 0.0)) throw DomainError("t must be >= 0");
    detail::check_points(x, y, spec);
    long kmax = 0;
    for (std::size_t i = 0; i < x.index.size(); ++i) kmax = std::max(kmax, std::labs(x.index[i] - y.index[i]));
    const auto row = scaled_bessel_i_row(static_cast<int>(kmax), t / (spec.delta * spec.delta));
    double p = 1.0;
    for (std::size_t i = 0; i < x.index.size(); ++i) p *= row[std::labs(x.index[i] - y.index[i])];
    return p;
}

/// Kernel values on the offsets [-R, R]^d, stored by |offset| in [0, R]^d.
struct KernelBox {
    int d = 1;
    long radius = 0;
    std::vector<double> values;

    double at(std::span<const long> offset) const {
        std::size_t f = 0;
        for (int i = 0; i < d; ++i) {
            const long a = std::labs(offset[i]);
            if (a > radius) return 0.0;
            f = f * static_cast<std::size_t>(radius + 1) + static_cast<std::size_t>(a);
        }
        return values[f];
    }
    /// Sum over all 2^d sign images of every stored entry (total mass in the box).
    double mass() const {
        double total = 0.0;
        for (std::size_t f = 0; f < values.size(); ++f) {
            std::size_t rem = f;
            double mult = 1.0;
            for (int i = 0; i < d; ++i) {
                if (rem % (radius + 1) != 0) mult *= 2.0;
                rem /= (radius + 1);
            }
            total += mult * values[f];
        }
        return total;
    }
};

/// Radius in lattice units beyond which the BTRW kernel at time t falls below ~1e-16.
inline long btrw_support_radius(double t, double delta, const QuadratureSpec& q = {}) {
    const double smax = std::sqrt(t) * q.tail_cutoff;
    return static_cast<long>(std::ceil(std::sqrt(2.0 * smax * 37.0) / delta)) + 5;
}

/// BTRW kernel (or its t-derivative) on the offset box of radius R.
inline KernelBox btrw_kernel_box(double t, double delta, int d, long R, const QuadratureSpec& q = {},
                                 ClockWeight weight = ClockWeight::density) {
    if (!(t >= 0.0)) throw DomainError("t must be >= 0");
    if (R < 0) throw DomainError("box radius must be >= 0");
    std::size_t m = 1;
    for (int i = 0; i < d; ++i) m *= static_cast<std::size_t>(R + 1);
    KernelBox box{d, R, std::vector<double>(m, 0.0)};
    if (t == 0.0) {
        if (weight == ClockWeight::time_deriv) throw DomainError("time derivative undefined at t = 0");
        box.values[0] = 1.0;
        return box;
    }
    q.validate();
    const double inv = 1.0 / (delta * delta);
    subordinate_vector(
        t, m,
        [&](double s, std::span<double> out) {
            detail::fill_product_box(scaled_bessel_i_row(static_cast<int>(R), s * inv), d, R, out);
        },
        std::span<double>(box.values), q, weight);
    return box;
}

/// Brownian-time random walk density 2 int_0^inf K^RW_{s;x,y} K^BM_{t;0,s} ds.
inline double btrw_density(double t, const LatticePoint& x, const LatticePoint& y, const LatticeSpec& spec,
                           const QuadratureSpec& q = {}) {
    if (!(t >= 0.0)) throw DomainError("t must be >= 0");
    detail::check_points(x, y, spec);
    std::vector<long> k(x.index.size());
    long kmax = 0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        k[i] = std::labs(x.index[i] - y.index[i]);
        kmax = std::max(kmax, k[i]);
    }
    if (t == 0.0) return kmax == 0 ? 1.0 : 0.0;
    q.validate();
    const double inv = 1.0 / (spec.delta * spec.delta);
    return subordinate(
        t,
        [&](double s) {
            const auto row = scaled_bessel_i_row(static_cast<int>(kmax), s * inv);
            double p = 1.0;
            for (long ki : k) p *= row[ki];
            return p;
        },
        q);
}

/// 2-Brownian-times random walk density at offset x from the origin.
inline double btrw2_density(double u, double v, const LatticePoint& x, const LatticeSpec& spec,
                            const QuadratureSpec& q = {}) {
    detail::check_time(u, "u");
    detail::check_time(v, "v");
    if (x.spacing != spec.delta || x.index.size() != static_cast<std::size_t>(spec.d))
        throw DomainError("point does not belong to the lattice");
    q.validate();
    if (u > v) std::swap(u, v);
    long kmax = 0;
    for (long ki : x.index) kmax = std::max(kmax, std::labs(ki));
    const double inv = 1.0 / (spec.delta * spec.delta);
    const QuadratureSpec inner = q.with_tol(q.rel_tol * 0.1);
    return subordinate(
        u,
        [&](double s1) {
            return subordinate(
                v,
                [&](double s2) {
                    const auto row = scaled_bessel_i_row(static_cast<int>(kmax), (s1 + s2) * inv);
                    double p = 1.0;
                    for (long ki : x.index) p *= row[std::labs(ki)];
                    return p;
                },
                inner);
        },
        q);
}

/// Eigen-decomposition of -Delta_n on a truncated block (zero or periodic boundary).
///
/// Gives the bounded-lattice BTRW kernel in closed spectral form: the clock
/// Laplace transform E exp(-mu |B_tau| / 2) equals erfcx(mu sqrt(tau / 8)).
class SpectralLattice {
public:
    explicit SpectralLattice(const LatticeSpec& spec) : spec_(spec) {
        spec.validate();
        if (!spec.truncated()) throw DomainError("spectral kernel needs a truncated lattice");
        const std::size_t M = spec.site_count();
        if (M > 6000) throw ResourceError("spectral kernel limited to 6000 sites");
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(M, M);
        LatticeField e = LatticeField::constant(spec, 0.0);
        for (std::size_t j = 0; j < M; ++j) {
            e.values.assign(M, 0.0);
            e.values[j] = 1.0;
            const auto col = discrete_laplacian(e);
            for (std::size_t i = 0; i < M; ++i) L(i, j) = -col.values[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
        mu_ = es.eigenvalues();
        for (Eigen::Index k = 0; k < mu_.size(); ++k) mu_[k] = std::max(mu_[k], 0.0);
        phi_ = es.eigenvectors();
    }

    const LatticeSpec& spec() const { return spec_; }
    std::size_t size() const { return static_cast<std::size_t>(mu_.size()); }
    /// Eigenvalues of -Delta_n, ascending.
    const Eigen::VectorXd& eigenvalues() const { return mu_; }
    /// Orthonormal eigenvectors as columns.
    const Eigen::MatrixXd& modes() const { return phi_; }

    /// Spectral multiplier of the BTRW kernel at time tau.
    Eigen::VectorXd multipliers(double tau) const {
        Eigen::VectorXd m(mu_.size());
        for (Eigen::Index k = 0; k < mu_.size(); ++k) m[k] = tau == 0.0 ? 1.0 : erfcx(mu_[k] * std::sqrt(tau / 8.0));
        return m;
    }
    /// Dense kernel matrix K_tau(x, y).
    Eigen::MatrixXd kernel(double tau) const {
        if (!(tau >= 0.0)) throw DomainError("tau must be >= 0");
        return phi_ * multipliers(tau).asDiagonal() * phi_.transpose();
    }
    /// Walk semigroup exp(s Delta_n / 2).
    Eigen::MatrixXd walk(double s) const {
        Eigen::VectorXd m(mu_.size());
        for (Eigen::Index k = 0; k < mu_.size(); ++k) m[k] = std::exp(-0.5 * mu_[k] * s);
        return phi_ * m.asDiagonal() * phi_.transpose();
    }

private:
    LatticeSpec spec_;
    Eigen::VectorXd mu_;
    Eigen::MatrixXd phi_;
};

/// U_D(t, x) = sum_y K^BTRW_{t;x,y} u0(y) for a compactly supported u0.
///
/// On a zero-boundary block u0 vanishes outside the block and the kernel is
/// the infinite-lattice one; on a periodic block the torus kernel is used.
inline LatticeField deterministic_part(double t, const LatticeField& u0, const QuadratureSpec& q = {}) {
    detail::check_field(u0);
    if (!(t >= 0.0)) throw DomainError("t must be >= 0");
    const LatticeSpec& s = u0.lattice;
    if (t == 0.0) return u0;
    if (s.boundary == Boundary::periodic) {
        SpectralLattice sp(s);
        Eigen::Map<const Eigen::VectorXd> v(u0.values.data(), static_cast<Eigen::Index>(u0.values.size()));
        Eigen::VectorXd r = sp.kernel(t) * v;
        return LatticeField{s, std::vector<double>(r.data(), r.data() + r.size())};
    }
    const long n = s.half_width();
    const KernelBox box = btrw_kernel_box(t, s.delta, s.d, 2 * n, q);
    LatticeField out = LatticeField::constant(s, 0.0);
    std::vector<long> off(s.d);
    for (std::size_t j = 0; j < u0.values.size(); ++j) {
        if (u0.values[j] == 0.0) continue;
        const auto yj = s.index_of(j);
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            const auto xi = s.index_of(i);
            for (int a = 0; a < s.d; ++a) off[a] = xi[a] - yj[a];
            out.values[i] += box.at(off) * u0.values[j];
        }
    }
    return out;
}

/// Initial condition given on the whole infinite lattice.
using InitialFunction = std::function<double(std::span<const double>)>;

/// U_D(t, x) on the sites of `spec` for u0 defined on all of delta Z^d; the
/// kernel sum is cut at `btrw_support_radius`.
inline LatticeField deterministic_part(double t, const InitialFunction& u0, const LatticeSpec& spec,
                                       const QuadratureSpec& q = {}) {
    spec.validate();
    if (!(t >= 0.0)) throw DomainError("t must be >= 0");
    LatticeField out = LatticeField::constant(spec, 0.0);
    if (t == 0.0) return LatticeField::from_function(spec, u0);
    const long R = btrw_support_radius(t, spec.delta, q);
    const KernelBox box = btrw_kernel_box(t, spec.delta, spec.d, R, q);
    const long w = 2 * R + 1;
    std::size_t total = 1;
    for (int a = 0; a < spec.d; ++a) total *= static_cast<std::size_t>(w);
    std::vector<long> off(spec.d);
    std::vector<double> y(spec.d);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const auto xi = spec.index_of(i);
        double acc = 0.0;
        for (std::size_t f = 0; f < total; ++f) {
            std::size_t rem = f;
            for (int a = spec.d - 1; a >= 0; --a) {
                off[a] = static_cast<long>(rem % w) - R;
                rem /= w;
            }
            const double k = box.at(off);
            if (k == 0.0) continue;
            for (int a = 0; a < spec.d; ++a) y[a] = (xi[a] + off[a]) * spec.delta;
            acc += k * u0(y);
        }
        out.values[i] = acc;
    }
    return out;
}

/// Tabulated kernel values on a (t, offset) grid.
struct KernelTable {
    std::string kind;  ///< "btrw" or "btbm"
    int d = 1;
    double delta = 1.0;
    long radius = 0;
    std::vector<double> times;
    std::vector<KernelBox> boxes;  ///< one per time, values by |offset|
    QuadratureSpec quad;
};

/// Builds a table; times are distributed over workers and assembled in order.
inline KernelTable build_kernel_table(const std::string& kind, const std::vector<double>& times, double delta,
                                      int d, long radius, const QuadratureSpec& q = {}, unsigned threads = 1) {
    if (kind != "btrw" && kind != "btbm") throw DomainError("unknown kernel kind: " + kind);
    if (radius < 0) throw DomainError("radius must be >= 0");
    KernelTable tab{kind, d, delta, radius, times, std::vector<KernelBox>(times.size()), q};
    parallel_for(times.size(), threads, [&](std::size_t i) {
        const double t = times[i];
        if (kind == "btrw") {
            tab.boxes[i] = btrw_kernel_box(t, delta, d, radius, q);
            return;
        }
        KernelBox box{d, radius, {}};
        std::size_t m = 1;
        for (int a = 0; a < d; ++a) m *= static_cast<std::size_t>(radius + 1);
        box.values.resize(m);
        for (std::size_t f = 0; f < m; ++f) {
            std::size_t rem = f;
            double r2 = 0.0;
            for (int a = 0; a < d; ++a) {
                const double c = static_cast<double>(rem % (radius + 1)) * delta;
                r2 += c * c;
                rem /= (radius + 1);
            }
            box.values[f] = btbm_density_r2(t, r2, d, q);
        }
        tab.boxes[i] = std::move(box);
    });
    return tab;
}

}  // namespace btp
