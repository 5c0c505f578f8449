#pragma once

// Reference values from tests/oracles/compute_oracles.py (mpmath, 30 digits),
// computed by direct quadrature in the original variables.

namespace oracle {

inline constexpr double kBtbmAnchor = 0.68621262755932616;    // Gamma(1/4) 2^{-3/4} / pi
inline constexpr double kBtbmD1R05 = 0.36644366100576676;     // d=1, t=1, |x|=0.5
inline constexpr double kBtbmD2R1 = 0.083428256486605237;     // d=2, t=1, |x|=1
inline constexpr double kBtbmD3R1T2 = 0.037020838690209001;   // d=3, t=2, |x|=1
inline constexpr double kBtbm2D1U1V2 = 0.33393040398161971;   // 2-BT density at 0, d=1, u=1, v=2
inline constexpr double kBtbm2D2U1V1 = 0.15828334600997479;   // d=2, u=v=1
inline constexpr double kBtbm2D3U1V3 = 0.063604184781293582;  // d=3, u=1, v=3
inline constexpr double kL2D1 = 0.36570909684291916;          // int K_1^2 dx, d=1
inline constexpr double kL2D2 = 0.15828334600997239;
inline constexpr double kL2D3 = 0.097150027098963193;
inline constexpr double kScaledI0At1 = 0.46575960759364044;   // e^{-x} I_k(x)
inline constexpr double kScaledI3At4 = 0.061124338029666293;
inline constexpr double kScaledI0At50 = 0.056561626647454193;
inline constexpr double kScaledI7At250 = 0.022883060370481134;
inline constexpr double kBtrwD1K0 = 0.17024171255832665;      // BTRW, d=1, delta=0.25, t=1, offset k
inline constexpr double kBtrwD1K4 = 0.044688243721047032;
inline constexpr double kBtrw2U1V2K0 = 0.084375883796385572;  // 2-BT walk, u=1, v=2, delta=0.25
inline constexpr double kBtrw2U1V2K3 = 0.06333391223409167;
// int_0^1 int (K_s(x) - K_s(x + 0.1))^2 dx ds in d=1, from the Fourier side
// (1/pi) int_0^1 int_R erfcx(xi^2 sqrt(s/8))^2 (1 - cos 0.1 xi) dxi ds
inline constexpr double kSpatialD1Z01T1 = 0.01904382324971191;

}  // namespace oracle
