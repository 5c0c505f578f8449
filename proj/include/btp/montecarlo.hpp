#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "btp/errors.hpp"
#include "btp/estimates.hpp"
#include "btp/lattice.hpp"
#include "btp/noise.hpp"
#include "btp/parallel.hpp"
#include "btp/solver.hpp"

namespace btp {

/// Seed, size and worker cap of a sampling run.
struct BatchSpec {
    std::uint64_t seed = 0;
    std::size_t count = 1000;
    unsigned threads = 1;

    void validate() const {
        if (count < 2) throw DomainError("a batch needs at least two samples");
    }
};

/// Mean estimate with its Monte Carlo standard error.
struct Estimate {
    double value = 0.0;
    double stderr_of_mean = 0.0;
};

/// Terminal points of N independent samples, row-major N x d.
struct SampleBatch {
    std::uint64_t seed = 0;
    std::size_t count = 0;
    int d = 1;
    double spacing = 0.0;  ///< lattice spacing, 0 for continuous samples
    std::vector<double> points;

    std::span<const double> point(std::size_t i) const { return {points.data() + i * d, static_cast<std::size_t>(d)}; }

    /// Sample mean of one coordinate.
    Estimate mean(int axis) const {
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double v = points[i * d + axis];
            s += v;
            s2 += v * v;
        }
        const double m = s / count, var = std::max(0.0, (s2 - s * m) / (count - 1));
        return {m, std::sqrt(var / count)};
    }

    std::vector<double> radii() const {
        std::vector<double> r(count);
        for (std::size_t i = 0; i < count; ++i) {
            double a = 0.0;
            for (int k = 0; k < d; ++k) a += points[i * d + k] * points[i * d + k];
            r[i] = std::sqrt(a);
        }
        return r;
    }

    /// Empirical probability of landing on the lattice point `x`.
    Estimate pmf(std::span<const double> x) const {
        if (spacing == 0.0) throw DomainError("pmf needs lattice samples");
        std::size_t hits = 0;
        for (std::size_t i = 0; i < count; ++i) {
            bool same = true;
            for (int k = 0; k < d && same; ++k) same = std::abs(points[i * d + k] - x[k]) < 0.5 * spacing;
            hits += same;
        }
        const double p = static_cast<double>(hits) / count;
        return {p, std::sqrt(p * (1.0 - p) / count)};
    }
};

namespace detail {

inline constexpr std::uint64_t kClockStream = 0x243F6A8885A308D3ull;
inline constexpr std::uint64_t kJumpStream = 0x13198A2E03707344ull;

inline Philox4x32::Key key_of(std::uint64_t seed, std::uint64_t tag) {
    const std::uint64_t h = splitmix64(seed ^ tag);
    return {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
}

inline Philox4x32::Counter counter_of(std::uint64_t i, std::uint32_t block) {
    return {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32), block, 0};
}

}  // namespace detail

/// Samples of the Brownian-time random walk started at x: |B_t| = sqrt(t)|Z|, then
/// each coordinate moves by the difference of two Poisson(|B_t| / 2 delta^2) jump counts.
inline SampleBatch sample_btrw(const LatticePoint& x, double t, const LatticeSpec& spec, const BatchSpec& batch) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("t must be >= 0");
    batch.validate();
    if (x.spacing != spec.delta || static_cast<int>(x.index.size()) != spec.d)
        throw DomainError("start point does not belong to the lattice");
    const int d = spec.d;
    SampleBatch out{batch.seed, batch.count, d, spec.delta, std::vector<double>(batch.count * d)};
    const auto clock_key = detail::key_of(batch.seed, detail::kClockStream);
    const std::uint64_t jump_key = splitmix64(batch.seed ^ detail::kJumpStream);
    const double rate = 1.0 / (2.0 * spec.delta * spec.delta);
    parallel_for(batch.count, batch.threads, [&](std::size_t i) {
        const double b = std::sqrt(t) * std::abs(philox_normal_pair(detail::counter_of(i, 0), clock_key)[0]);
        PhiloxEngine eng(jump_key, i);
        for (int k = 0; k < d; ++k) {
            long steps = 0;
            if (b * rate > 0.0) {
                std::poisson_distribution<long> jumps(b * rate);
                steps = jumps(eng);
                steps -= jumps(eng);
            }
            out.points[i * d + k] = (x.index[k] + steps) * spec.delta;
        }
    });
    return out;
}

/// Samples of the 2-Brownian-times Brownian motion from the origin:
/// X = sqrt(|B1_u| + |B2_v|) G with G standard normal in R^d.
inline SampleBatch sample_btbm2(double u, double v, int d, const BatchSpec& batch) {
    detail::check_time(u, "u");
    detail::check_time(v, "v");
    detail::check_dim(d);
    batch.validate();
    SampleBatch out{batch.seed, batch.count, d, 0.0, std::vector<double>(batch.count * d)};
    const auto key = detail::key_of(batch.seed, detail::kClockStream);
    const double su = std::sqrt(u), sv = std::sqrt(v);
    parallel_for(batch.count, batch.threads, [&](std::size_t i) {
        const auto z = philox_normal_pair(detail::counter_of(i, 0), key);
        const double s = su * std::abs(z[0]) + sv * std::abs(z[1]);
        const double sd = std::sqrt(s);
        for (int k = 0; k < d; k += 2) {
            const auto g = philox_normal_pair(detail::counter_of(i, 1 + static_cast<std::uint32_t>(k / 2)), key);
            out.points[i * d + k] = sd * g[0];
            if (k + 1 < d) out.points[i * d + k + 1] = sd * g[1];
        }
    });
    return out;
}

/// Gaussian kernel density estimate at the origin with bandwidth h.
inline Estimate kde_at_origin(const SampleBatch& b, double h) {
    if (!(h > 0.0)) throw DomainError("bandwidth must be positive");
    const double norm = std::pow(2.0 * std::numbers::pi * h * h, -0.5 * b.d);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < b.count; ++i) {
        double r2 = 0.0;
        for (int k = 0; k < b.d; ++k) r2 += b.points[i * b.d + k] * b.points[i * b.d + k];
        const double w = norm * std::exp(-r2 / (2.0 * h * h));
        s += w;
        s2 += w * w;
    }
    const double m = s / b.count, var = std::max(0.0, (s2 - s * m) / (b.count - 1));
    return {m, std::sqrt(var / b.count)};
}

/// Two-sample Kolmogorov-Smirnov statistic and its asymptotic p-value.
struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw DomainError("KS test needs non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double dmax = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        dmax = std::max(dmax, std::abs(i / na - j / nb));
    }
    const double ne = na * nb / (na + nb);
    const double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * dmax;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
        p += term;
        if (std::abs(term) < 1e-12) break;
    }
    return {dmax, std::clamp(p, 0.0, 1.0)};
}

/// True when every coordinate of site i satisfies |x_a| <= radius.
inline bool in_interior(const LatticeSpec& spec, std::size_t i, double radius) {
    for (long a : spec.index_of(i))
        if (std::labs(a) * spec.delta > radius + 1e-9 * spec.delta) return false;
    return true;
}

/// Empirical M_q(t) = sup_x E|U(t, x)|^{2q}, the sup taken over |x| <= l/2.
struct MomentSeries {
    double q = 1.0;
    std::size_t count = 0;
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> stderr_of_mean;  ///< at the maximising site
    bool super_exponential = false;
};

class MomentTracker {
public:
    MomentTracker(LatticeSpec spec, std::vector<double> times, double q) : spec_(std::move(spec)), times_(std::move(times)), q_(q) {
        if (!(q >= 1.0)) throw DomainError("moment order q must be >= 1");
        const double radius = spec_.truncated() ? 0.5 * *spec_.trunc_radius : 0.0;
        for (std::size_t i = 0; i < spec_.site_count(); ++i)
            if (in_interior(spec_, i, radius)) sites_.push_back(i);
        s1_.assign(times_.size() * sites_.size(), 0.0);
        s2_ = s1_;
    }

    void add(const SolutionField& f) {
        if (f.times.size() != times_.size() || !(f.lattice == spec_)) throw DomainError("field does not match the tracker grid");
        const std::size_t M = f.sites();
        for (std::size_t k = 0; k < times_.size(); ++k)
            for (std::size_t s = 0; s < sites_.size(); ++s) {
                const double v = std::pow(std::abs(f.values[k * M + sites_[s]]), 2.0 * q_);
                s1_[k * sites_.size() + s] += v;
                s2_[k * sites_.size() + s] += v * v;
            }
        ++count_;
    }

    std::size_t count() const { return count_; }

    MomentSeries result() const {
        if (count_ < 100) throw DomainError("moment tracking needs at least 100 replicates");
        MomentSeries out{q_, count_, times_, {}, {}, false};
        const double n = static_cast<double>(count_);
        for (std::size_t k = 0; k < times_.size(); ++k) {
            double best = -1.0, best_se = 0.0;
            for (std::size_t s = 0; s < sites_.size(); ++s) {
                const double m = s1_[k * sites_.size() + s] / n;
                if (m > best) {
                    best = m;
                    best_se = std::sqrt(std::max(0.0, s2_[k * sites_.size() + s] / n - m * m) / (n - 1.0));
                }
            }
            out.values.push_back(best);
            out.stderr_of_mean.push_back(best_se);
        }
        // log-growth rate in the late half against the early half
        std::vector<std::size_t> pos;
        for (std::size_t k = 0; k < times_.size(); ++k)
            if (out.values[k] > 0.0) pos.push_back(k);
        if (pos.size() >= 3) {
            const std::size_t a = pos.front(), b = pos[pos.size() / 2], c = pos.back();
            auto rate = [&](std::size_t i, std::size_t j) {
                return (std::log(out.values[j]) - std::log(out.values[i])) / (times_[j] - times_[i]);
            };
            out.super_exponential = rate(b, c) > 2.0 * std::max(rate(a, b), 0.0) + 1.0;
        }
        return out;
    }

private:
    LatticeSpec spec_;
    std::vector<double> times_;
    double q_;
    std::vector<std::size_t> sites_;
    std::vector<double> s1_, s2_;
    std::size_t count_ = 0;
};

inline MomentSeries moment_tracker(std::span<const SolutionField> fields, double q) {
    if (fields.empty()) throw DomainError("moment tracking needs fields");
    MomentTracker t(fields.front().lattice, fields.front().times, q);
    for (const auto& f : fields) t.add(f);
    return t.result();
}

enum class HolderAxis { time, space };

inline std::string to_string(HolderAxis a) { return a == HolderAxis::time ? "time" : "space"; }

/// Spatial Hoelder exponent of the limit solution in dimension d.
inline double spatial_holder_exponent(int d) { return d == 3 ? 0.5 : 1.0; }

/// Fitted growth of E|increment of U_R|^{2q} against the lag.
struct HolderReport {
    HolderAxis axis = HolderAxis::time;
    double q = 1.0;
    int d = 1;
    std::size_t count = 0;
    std::vector<double> lags;
    std::vector<double> log_moments;
    std::vector<double> log_stderr;
    SlopeFit fit;
    double moment_reference = 0.0;  ///< (4 - d) q / 4 in time, 2 q alpha_d in space
    double holder_reference = 0.0;  ///< (4 - d) / 8 in time, alpha_d in space

    bool passed(double tol) const {
        return std::isfinite(fit.slope) && std::abs(fit.slope - moment_reference) < tol + 2.0 * fit.slope_stderr;
    }
};

/// Streaming increment-moment accumulator for one lag grid.
///
/// Each replicate contributes one statistic per lag: the 2q-th power of the
/// random-part increment averaged over interior sites (|x| <= l/2) at the
/// final grid time. Replicates are stored by index so the reduction does not
/// depend on arrival order.
class HolderAccumulator {
public:
    HolderAccumulator(HolderAxis axis, double q, std::vector<double> lags, LatticeSpec spec, TimeGrid grid)
        : axis_(axis), q_(q), lags_(std::move(lags)), spec_(std::move(spec)), grid_(grid) {
        if (!(q >= 1.0)) throw DomainError("moment order q must be >= 1");
        if (lags_.size() < 3) throw DomainError("lag grid needs at least three lags");
        if (!std::is_sorted(lags_.begin(), lags_.end()) || !(lags_.front() > 0.0))
            throw DomainError("lags must be positive and increasing");
        if (std::log10(lags_.back() / lags_.front()) < 1.5 - 1e-9) throw DomainError("lag grid must span 1.5 decades");
        if (!spec_.truncated()) throw DomainError("interior needs a truncated lattice");
        const double radius = 0.5 * *spec_.trunc_radius;
        const double unit = axis_ == HolderAxis::time ? grid_.dt : spec_.delta;
        for (double h : lags_) {
            const long m = std::lround(h / unit);
            if (m < 1 || std::abs(m * unit - h) > 1e-9 * h) throw DomainError("lag is not on the grid");
            if (axis_ == HolderAxis::time && static_cast<std::size_t>(m) > grid_.steps) throw DomainError("lag exceeds horizon");
            steps_.push_back(m);
        }
        for (std::size_t i = 0; i < spec_.site_count(); ++i)
            if (in_interior(spec_, i, radius)) sites_.push_back(i);
        if (axis_ == HolderAxis::space) {
            for (long m : steps_) {
                std::vector<std::pair<std::size_t, std::size_t>> pr;
                for (std::size_t i : sites_) {
                    auto idx = spec_.index_of(i);
                    idx[0] += m;
                    if (!spec_.contains(idx)) continue;
                    const std::size_t j = spec_.flat_of(idx);
                    if (in_interior(spec_, j, radius)) pr.emplace_back(i, j);
                }
                if (pr.empty()) throw DomainError("spatial lag leaves the interior");
                pairs_.push_back(std::move(pr));
            }
        }
    }

    std::size_t lag_count() const { return lags_.size(); }

    /// Per-replicate lag statistics of one field, written to `out` (lag_count() entries).
    void evaluate(const SolutionField& f, std::span<double> out) const {
        if (!(f.lattice == spec_) || f.times.size() != grid_.steps + 1) throw DomainError("field does not match the accumulator");
        if (out.size() != lags_.size()) throw DomainError("statistic slot has the wrong size");
        const std::size_t S = grid_.steps;
        for (std::size_t l = 0; l < lags_.size(); ++l) {
            double acc = 0.0;
            if (axis_ == HolderAxis::time) {
                const std::size_t k0 = S - static_cast<std::size_t>(steps_[l]);
                for (std::size_t i : sites_) acc += std::pow(std::abs(f.random_part(S, i) - f.random_part(k0, i)), 2.0 * q_);
                acc /= static_cast<double>(sites_.size());
            } else {
                for (const auto& [i, j] : pairs_[l]) acc += std::pow(std::abs(f.random_part(S, j) - f.random_part(S, i)), 2.0 * q_);
                acc /= static_cast<double>(pairs_[l].size());
            }
            out[l] = acc;
        }
    }

    void insert(std::uint64_t replicate, std::span<const double> stat) {
        if (stat.size() != lags_.size()) throw DomainError("statistic has the wrong size");
        std::lock_guard lock(mu_);
        stats_[replicate].assign(stat.begin(), stat.end());
    }

    void add(std::uint64_t replicate, const SolutionField& f) {
        std::vector<double> stat(lags_.size());
        evaluate(f, stat);
        insert(replicate, stat);
    }

    std::size_t count() const {
        std::lock_guard lock(mu_);
        return stats_.size();
    }

    HolderReport fit(int min_count = 200) const {
        std::lock_guard lock(mu_);
        const std::size_t N = stats_.size(), L = lags_.size();
        if (N < static_cast<std::size_t>(min_count)) throw DomainError("Hoelder fit needs a larger ensemble");
        std::vector<double> mean(L, 0.0);
        for (const auto& [r, s] : stats_)
            for (std::size_t l = 0; l < L; ++l) mean[l] += s[l];
        for (double& m : mean) m /= static_cast<double>(N);
        if (std::all_of(mean.begin(), mean.end(), [](double m) { return m == 0.0; }))
            throw DomainError("fields have no random part");
        // covariance of the log means by the delta method
        std::vector<double> cov(L * L, 0.0);
        for (const auto& [r, s] : stats_)
            for (std::size_t a = 0; a < L; ++a)
                for (std::size_t b = 0; b < L; ++b) cov[a * L + b] += (s[a] - mean[a]) * (s[b] - mean[b]);
        for (std::size_t a = 0; a < L; ++a)
            for (std::size_t b = 0; b < L; ++b) cov[a * L + b] /= (N - 1.0) * N * mean[a] * mean[b];

        HolderReport rep;
        rep.axis = axis_;
        rep.q = q_;
        rep.d = spec_.d;
        rep.count = N;
        rep.lags = lags_;
        for (std::size_t l = 0; l < L; ++l) {
            rep.log_moments.push_back(std::log(mean[l]));
            rep.log_stderr.push_back(std::sqrt(cov[l * L + l]));
        }
        rep.fit = fit_loglog(lags_, mean);
        double mx = 0.0, sxx = 0.0;
        for (double h : lags_) mx += std::log(h) / L;
        for (double h : lags_) sxx += (std::log(h) - mx) * (std::log(h) - mx);
        double var = 0.0;
        for (std::size_t a = 0; a < L; ++a)
            for (std::size_t b = 0; b < L; ++b)
                var += (std::log(lags_[a]) - mx) * (std::log(lags_[b]) - mx) * cov[a * L + b];
        rep.fit.slope_stderr = std::sqrt(std::max(0.0, var)) / sxx;
        const int d = spec_.d;
        if (axis_ == HolderAxis::time) {
            rep.moment_reference = (4.0 - d) * q_ / 4.0;
            rep.holder_reference = (4.0 - d) / 8.0;
        } else {
            rep.moment_reference = 2.0 * q_ * spatial_holder_exponent(d);
            rep.holder_reference = spatial_holder_exponent(d);
        }
        return rep;
    }

private:
    HolderAxis axis_;
    double q_;
    std::vector<double> lags_;
    LatticeSpec spec_;
    TimeGrid grid_;
    std::vector<long> steps_;
    std::vector<std::size_t> sites_;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> pairs_;
    mutable std::mutex mu_;
    std::map<std::uint64_t, std::vector<double>> stats_;
};

inline HolderReport holder_fit(std::span<const SolutionField> fields, HolderAxis axis, double q, std::vector<double> lags) {
    if (fields.empty()) throw DomainError("Hoelder fit needs fields");
    const auto& f0 = fields.front();
    const TimeGrid grid{f0.times.size() > 1 ? f0.times[1] - f0.times[0] : 1.0, f0.times.size() - 1};
    HolderAccumulator acc(axis, q, std::move(lags), f0.lattice, grid);
    for (const auto& f : fields) acc.add(f.replicate, f);
    return acc.fit();
}

/// Additive-noise (a = 1, u0 = 0) ensemble for Hoelder fits on both axes.
struct HolderExperiment {
    int d = 1;
    double delta = 1.0 / 256.0;
    double l = 0.5;
    double horizon = 0.25;
    int level = 12;                    ///< time step 2^-level
    std::vector<double> time_lags;     ///< empty: 16..512 time steps
    std::vector<double> space_lags;    ///< empty: 1..32 lattice steps when they fit in |x| <= l/2
    double q = 1.0;
    std::size_t replicates = 500;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct HolderResult {
    HolderReport time;
    std::optional<HolderReport> space;  ///< absent when no spatial lag grid fits the block
};

inline HolderResult run_holder_experiment(HolderExperiment e) {
    const LatticeSpec spec = make_lattice(e.delta, e.d, e.l);
    const TimeGrid grid = TimeGrid::dyadic(e.horizon, e.level);
    if (e.time_lags.empty())
        for (int m = 16; m <= 512; m *= 2) e.time_lags.push_back(m * grid.dt);
    if (e.space_lags.empty() && 32.0 * e.delta <= 0.5 * e.l + 1e-12)
        for (int k = 1; k <= 32; k *= 2) e.space_lags.push_back(k * e.delta);
    SieProblem p(spec, InitialCondition::constant_value(0.0), make_diffusion("one"), grid, {}, e.threads);
    const NoiseSystem noise(e.seed, grid.dt, grid.steps);
    HolderAccumulator ta(HolderAxis::time, e.q, e.time_lags, spec, grid);
    std::optional<HolderAccumulator> sa;
    if (!e.space_lags.empty()) sa.emplace(HolderAxis::space, e.q, e.space_lags, spec, grid);
    // stats go to slots sized up front; small allocations interleaved with the
    // per-replicate solver buffers fragment the heap (~10 MB RSS per replicate in d = 2)
    const std::size_t Lt = ta.lag_count(), Ls = sa ? sa->lag_count() : 0;
    std::vector<double> tstat(e.replicates * Lt), sstat(e.replicates * Ls);
    parallel_for(e.replicates, e.threads, [&](std::size_t r) {
        const SolutionField f = picard_solve(p, noise, r);
        ta.evaluate(f, std::span<double>(tstat).subspan(r * Lt, Lt));
        if (sa) sa->evaluate(f, std::span<double>(sstat).subspan(r * Ls, Ls));
    });
    for (std::size_t r = 0; r < e.replicates; ++r) {
        ta.insert(r, std::span<const double>(tstat).subspan(r * Lt, Lt));
        if (sa) sa->insert(r, std::span<const double>(sstat).subspan(r * Ls, Ls));
    }
    HolderResult out{ta.fit(), std::nullopt};
    if (sa) out.space = sa->fit();
    return out;
}

}  // namespace btp
