#pragma once

#include <complex>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "btp/errors.hpp"

namespace btp {

namespace detail {

/// FFTW's planner is not thread-safe; every plan create/destroy goes through this lock.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};
template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

inline FftwBuffer<double> alloc_real(std::size_t n) {
    auto* p = fftw_alloc_real(n);
    if (!p) throw ResourceError("fftw allocation failed");
    return FftwBuffer<double>(p);
}
inline FftwBuffer<fftw_complex> alloc_complex(std::size_t n) {
    auto* p = fftw_alloc_complex(n);
    if (!p) throw ResourceError("fftw allocation failed");
    return FftwBuffer<fftw_complex>(p);
}

/// Smallest 7-smooth integer >= n.
inline long good_fft_size(long n) {
    for (long m = std::max(1L, n);; ++m) {
        long r = m;
        for (long p : {2L, 3L, 5L, 7L})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

}  // namespace detail

/// Causal space-time convolution on a lattice block via one rank-(d+1) real FFT:
///
///   out[k][x] = sum_{j<k} sum_y G(k - j, x - y) g[j][y],  k = 0..S,
///
/// with zero-padded space for a zero boundary and a circular axis for a torus.
/// The kernel spectrum is built once; `apply` is safe to call concurrently.
class CausalConvolver {
public:
    using KernelFn = std::function<double(std::size_t lag, std::span<const long> offset)>;

    CausalConvolver(std::size_t steps, int d, long half_width, bool periodic, const KernelFn& kernel)
        : S_(steps), d_(d), n_(half_width), periodic_(periodic) {
        side_ = 2 * n_ + 1;
        P_ = periodic ? side_ : detail::good_fft_size(4 * n_ + 1);
        Pt_ = static_cast<long>(2 * S_);
        dims_.assign(1, static_cast<int>(Pt_));
        for (int a = 0; a < d_; ++a) dims_.push_back(static_cast<int>(P_));
        real_size_ = static_cast<std::size_t>(Pt_);
        for (int a = 0; a < d_; ++a) real_size_ *= static_cast<std::size_t>(P_);
        complex_size_ = real_size_ / static_cast<std::size_t>(P_) * static_cast<std::size_t>(P_ / 2 + 1);
        sites_ = 1;
        for (int a = 0; a < d_; ++a) sites_ *= static_cast<std::size_t>(side_);
        if (real_size_ > (std::size_t{1} << 28)) throw ResourceError("convolution grid too large");

        auto in = detail::alloc_real(real_size_);
        auto out = detail::alloc_complex(complex_size_);
        {
            std::lock_guard lock(detail::fftw_planner_mutex());
            fwd_ = fftw_plan_dft_r2c(d_ + 1, dims_.data(), in.get(), out.get(), FFTW_ESTIMATE);
            inv_ = fftw_plan_dft_c2r(d_ + 1, dims_.data(), out.get(), in.get(), FFTW_ESTIMATE);
        }
        if (!fwd_ || !inv_) throw ResourceError("fftw planning failed");

        // kernel on lags 1..S and offsets reachable between two block sites
        std::memset(in.get(), 0, sizeof(double) * real_size_);
        const long R = periodic ? n_ : 2 * n_;
        const long w = periodic ? side_ : 2 * R + 1;
        std::size_t noff = 1;
        for (int a = 0; a < d_; ++a) noff *= static_cast<std::size_t>(w);
        std::vector<long> off(d_);
        for (std::size_t f = 0; f < noff; ++f) {
            std::size_t rem = f, pos = 0;
            for (int a = d_ - 1; a >= 0; --a) {
                off[a] = static_cast<long>(rem % w) - (periodic ? n_ : R);
                rem /= w;
            }
            for (int a = 0; a < d_; ++a) pos = pos * P_ + static_cast<std::size_t>(((off[a] % P_) + P_) % P_);
            for (std::size_t L = 1; L <= S_; ++L) in[L * (real_size_ / Pt_) + pos] += kernel(L, off);
        }
        spectrum_ = detail::alloc_complex(complex_size_);
        fftw_execute_dft_r2c(fwd_, in.get(), spectrum_.get());
        const double scale = 1.0 / static_cast<double>(real_size_);
        for (std::size_t i = 0; i < complex_size_; ++i) {
            spectrum_[i][0] *= scale;
            spectrum_[i][1] *= scale;
        }
    }

    CausalConvolver(const CausalConvolver&) = delete;
    CausalConvolver& operator=(const CausalConvolver&) = delete;
    ~CausalConvolver() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        if (fwd_) fftw_destroy_plan(fwd_);
        if (inv_) fftw_destroy_plan(inv_);
    }

    std::size_t steps() const { return S_; }
    std::size_t sites() const { return sites_; }

    /// g has S * sites entries (time-major); out receives (S + 1) * sites entries.
    void apply(std::span<const double> g, std::span<double> out) const {
        if (g.size() != S_ * sites_ || out.size() != (S_ + 1) * sites_) throw DomainError("convolution size mismatch");
        auto in = detail::alloc_real(real_size_);
        auto spec = detail::alloc_complex(complex_size_);
        std::memset(in.get(), 0, sizeof(double) * real_size_);
        const std::size_t slab = real_size_ / static_cast<std::size_t>(Pt_);
        std::vector<std::size_t> pos(sites_);
        for (std::size_t i = 0; i < sites_; ++i) {
            std::size_t rem = i, p = 0, mul = 1;
            for (int a = d_ - 1; a >= 0; --a) {
                p += static_cast<std::size_t>(rem % side_) * mul;
                rem /= side_;
                mul *= static_cast<std::size_t>(P_);
            }
            pos[i] = p;
        }
        for (std::size_t j = 0; j < S_; ++j)
            for (std::size_t i = 0; i < sites_; ++i) in[j * slab + pos[i]] = g[j * sites_ + i];
        fftw_execute_dft_r2c(fwd_, in.get(), spec.get());
        for (std::size_t i = 0; i < complex_size_; ++i) {
            const double a = spec[i][0], b = spec[i][1];
            const double c = spectrum_[i][0], e = spectrum_[i][1];
            spec[i][0] = a * c - b * e;
            spec[i][1] = a * e + b * c;
        }
        fftw_execute_dft_c2r(inv_, spec.get(), in.get());
        for (std::size_t k = 0; k <= S_; ++k)
            for (std::size_t i = 0; i < sites_; ++i) out[k * sites_ + i] = k == 0 ? 0.0 : in[k * slab + pos[i]];
    }

private:
    std::size_t S_;
    int d_;
    long n_, side_ = 0, P_ = 0, Pt_ = 0;
    bool periodic_;
    std::vector<int> dims_;
    std::size_t real_size_ = 0, complex_size_ = 0, sites_ = 0;
    fftw_plan fwd_ = nullptr, inv_ = nullptr;
    detail::FftwBuffer<fftw_complex> spectrum_;
};

}  // namespace btp
