#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "btp/errors.hpp"

namespace btp {

/// e^{-x} I_k(x) for k = 0..kmax, x >= 0.
///
/// Miller backward recurrence started well above both kmax and sqrt(x), then
/// normalized with e^{-x}(I_0 + 2 sum_{k>=1} I_k) = 1. Stable for any x; cost
/// grows like sqrt(x).
inline std::vector<double> scaled_bessel_i_row(int kmax, double x) {
    if (kmax < 0) throw DomainError("kmax must be nonnegative");
    if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("bessel argument must be finite and >= 0");
    std::vector<double> row(kmax + 1, 0.0);
    if (x == 0.0) {
        row[0] = 1.0;
        return row;
    }
    const double km = static_cast<double>(kmax);
    const int start = static_cast<int>(std::ceil(std::sqrt(km * km + 80.0 * x))) + 20;
    const double two_over_x = 2.0 / x;

    double next = 0.0, cur = 1e-280, sum = 0.0;
    for (int k = start; k >= 1; --k) {
        // cur = I_k (unnormalized), next = I_{k+1}
        if (k <= kmax) row[k] = cur;
        sum += 2.0 * cur;
        const double prev = k * two_over_x * cur + next;
        next = cur;
        cur = prev;
        if (cur > 1e250) {
            next *= 1e-250;
            cur *= 1e-250;
            sum *= 1e-250;
            for (int j = k; j <= kmax; ++j) row[j] *= 1e-250;
        }
    }
    row[0] = cur;
    sum += cur;
    const double inv = 1.0 / sum;
    for (double& v : row) v *= inv;
    return row;
}

/// e^{-x} I_k(x) for a single order.
inline double scaled_bessel_i(int k, double x) {
    return scaled_bessel_i_row(k < 0 ? -k : k, x).back();
}

/// Scaled complementary error function exp(z^2) erfc(z).
inline double erfcx(double z) {
    if (z < 0.0) return 2.0 * std::exp(z * z) - erfcx(-z);
    if (z < 25.0) return std::exp(z * z) * std::erfc(z);
    const double iz2 = 1.0 / (z * z);
    return (1.0 - 0.5 * iz2 * (1.0 - 1.5 * iz2 * (1.0 - 2.5 * iz2))) /
           (z * std::sqrt(std::numbers::pi));
}

}  // namespace btp
