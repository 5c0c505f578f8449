"""Independent high-precision reference values frozen into tests/oracle_values.hpp.

Uses direct mpmath quadrature in the original variables (no substitutions shared
with the C++ implementation).
"""
import mpmath as mp

mp.mp.dps = 30


def bm(s, r2, d):
    return (2 * mp.pi * s) ** (-mp.mpf(d) / 2) * mp.e ** (-r2 / (2 * s))


def w(t, s):
    return mp.e ** (-s * s / (2 * t)) / mp.sqrt(2 * mp.pi * t)


def btbm(t, r, d):
    return 2 * mp.quad(lambda s: bm(s, r * r, d) * w(t, s), [0, mp.sqrt(t), 4 * mp.sqrt(t), mp.inf])


def btbm2(u, v, d, r=0):
    f = lambda a, b: 4 * bm(a + b, r * r, d) * w(u, a) * w(v, b)
    return mp.quad(f, [0, 1, 6, mp.inf], [0, 1, 6, mp.inf])


def rw1(s, k, delta):
    x = s / delta**2
    return mp.besseli(k, x) * mp.e ** (-x)


def btrw(t, k, delta):
    return 2 * mp.quad(lambda s: rw1(s, k, delta) * w(t, s), [0, delta**2, mp.sqrt(t), 4 * mp.sqrt(t), mp.inf])


def btrw2(u, v, k, delta):
    f = lambda a, b: 4 * rw1(a + b, k, delta) * w(u, a) * w(v, b)
    return mp.quad(f, [0, 0.5, 2, 8, mp.inf], [0, 0.5, 2, 8, mp.inf])


def l2(d):
    return mp.quad(lambda r: btbm(1, r, d) ** 2 * {1: 2, 2: 2 * mp.pi * r, 3: 4 * mp.pi * r * r}[d], [0, 1, 3, 8])


def spatial_d1(z, t):
    # int_0^t int_R [K_s(x) - K_s(x+z)]^2 dx ds by brute force
    inner = lambda s: mp.quad(lambda x: (btbm(s, x, 1) - btbm(s, x + z, 1)) ** 2, [-mp.inf, -z, 0, mp.inf])
    return mp.quad(inner, [0, t])


def spatial_d1_fourier(z, t):
    # Fourier side: K^_s(xi) = E exp(-xi^2 |B_s| / 2) = erfcx(xi^2 sqrt(s / 8))
    kh = lambda s, xi: mp.exp(xi**4 * s / 8) * mp.erfc(xi * xi * mp.sqrt(s / 8))
    inner = lambda s: 2 / mp.pi * mp.quad(lambda xi: kh(s, xi) ** 2 * (1 - mp.cos(xi * z)), [0, 1, 10, 100, mp.inf])
    return mp.quad(inner, [0, t])


def main():
    vals = {
        "kBtbmAnchor": mp.gamma(0.25) * mp.mpf(2) ** (-0.75) / mp.pi,
        "kBtbmD1R05": btbm(1, 0.5, 1),
        "kBtbmD2R1": btbm(1, 1, 2),
        "kBtbmD3R1T2": btbm(2, 1, 3),
        "kBtbm2D1U1V2": btbm2(1, 2, 1),
        "kBtbm2D2U1V1": btbm2(1, 1, 2),
        "kBtbm2D3U1V3": btbm2(1, 3, 3),
        "kL2D1": l2(1),
        "kL2D2": l2(2),
        "kL2D3": l2(3),
        "kScaledI0At1": mp.besseli(0, 1) * mp.e ** -1,
        "kScaledI3At4": mp.besseli(3, 4) * mp.e ** -4,
        "kScaledI0At50": mp.besseli(0, 50) * mp.e ** -50,
        "kScaledI7At250": mp.besseli(7, 250) * mp.e ** -250,
        "kBtrwD1K0": btrw(1, 0, mp.mpf("0.25")),
        "kBtrwD1K4": btrw(1, 4, mp.mpf("0.25")),
        "kBtrw2U1V2K0": btrw2(1, 2, 0, mp.mpf("0.25")),
        "kBtrw2U1V2K3": btrw2(1, 2, 3, mp.mpf("0.25")),
        "kSpatialD1Z01T1": spatial_d1_fourier(mp.mpf("0.1"), 1),
    }
    for k, v in vals.items():
        print(f"inline constexpr double {k} = {mp.nstr(v, 17)};")


if __name__ == "__main__":
    main()
