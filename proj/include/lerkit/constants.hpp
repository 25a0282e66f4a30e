#pragma once

#include <cmath>

namespace lerkit {

// Exact SI values (2019 redefinition).
inline constexpr double planck_h = 6.62607015e-34;    // J s
inline constexpr double boltzmann_kB = 1.380649e-23;  // J/K

inline constexpr double pi = 3.141592653589793238462643383279502884;

// BCS weak-coupling gap ratio, Delta_0 / (k_B T_c) = pi / exp(euler_gamma).
inline constexpr double bcs_gap_ratio = 1.7638769603880246;

inline double dbm_to_watts(double p_dbm) {
    return std::pow(10.0, (p_dbm - 30.0) / 10.0);
}

inline double watts_to_dbm(double p_watts) {
    return 10.0 * std::log10(p_watts) + 30.0;
}

} // namespace lerkit
