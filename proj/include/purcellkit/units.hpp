#pragma once

// Internal units: angular frequency in rad/ns, time in ns.
// 1 GHz of ordinary frequency is 2*pi rad/ns, so every conversion is one exact factor.

#include <numbers>

namespace purcellkit::units {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

constexpr double ghz(double f_ghz) { return two_pi * f_ghz; }
constexpr double mhz(double f_mhz) { return two_pi * f_mhz * 1e-3; }
constexpr double to_ghz(double omega) { return omega / two_pi; }
constexpr double to_mhz(double omega) { return omega / two_pi * 1e3; }

constexpr double us(double t_us) { return t_us * 1e3; }
constexpr double to_us(double t_ns) { return t_ns * 1e-3; }

// rate from a lifetime given in ns (rate^-1 = t)
constexpr double rate_from_inv_ns(double t_ns) { return 1.0 / t_ns; }

}  // namespace purcellkit::units
