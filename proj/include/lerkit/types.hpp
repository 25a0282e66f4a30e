#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "lerkit/errors.hpp"

namespace lerkit {

using cplx = std::complex<double>;

// Parameters of one notch resonance. Q_e is the complex external quality
// factor |Q_e| e^{i phi}; the coupling Q follows from Q_c^-1 = Re(Q_e^-1).
struct ResonatorParams {
    double f_r = 0.0;      // resonance frequency, Hz
    double q_i = 0.0;      // internal quality factor
    double q_e_mag = 0.0;  // |Q_e|
    double phi = 0.0;      // impedance mismatch angle, rad, in (-pi/2, pi/2)
    double amp = 1.0;      // off-resonance transmission scale
    double tau = 0.0;      // cable delay, s

    double q_c() const { return q_e_mag / std::cos(phi); }
    double q_l() const { return 1.0 / (1.0 / q_i + 1.0 / q_c()); }

    void validate() const {
        auto positive_finite = [](double v, const char* name) {
            if (!std::isfinite(v) || v <= 0.0)
                throw parameter_domain_error(name, "must be positive and finite");
        };
        positive_finite(f_r, "f_r");
        positive_finite(q_i, "q_i");
        positive_finite(q_e_mag, "q_e_mag");
        positive_finite(amp, "amp");
        if (!std::isfinite(phi) || std::abs(phi) >= pi_half())
            throw parameter_domain_error("phi", "must lie in (-pi/2, pi/2)");
        if (!std::isfinite(tau))
            throw parameter_domain_error("tau", "must be finite");
        if (q_i <= 1.0)
            throw parameter_domain_error("q_i", "sub-unity Q is unphysical here");
        if (q_c() <= 1.0 || !std::isfinite(q_c()))
            throw parameter_domain_error("q_e_mag", "derived Q_c must exceed 1 and be finite");
    }

private:
    static constexpr double pi_half() { return 1.5707963267948966; }
};

// One measured (or simulated) complex transmission sweep.
struct ComplexTrace {
    std::vector<double> freqs;  // Hz, strictly increasing
    std::vector<cplx> s21;
    std::optional<double> temperature_K;
    std::optional<double> power_dBm;  // power at chip
    std::string label;

    std::size_t size() const { return freqs.size(); }

    void validate(std::size_t min_points = 8) const {
        if (freqs.size() != s21.size())
            throw parameter_domain_error("s21", "length differs from freqs");
        if (freqs.size() < min_points)
            throw parameter_domain_error("freqs",
                                         "need at least " + std::to_string(min_points) + " points");
        for (std::size_t i = 0; i < freqs.size(); ++i) {
            if (!std::isfinite(freqs[i]) || freqs[i] <= 0.0)
                throw parameter_domain_error("freqs", "must be positive and finite");
            if (i > 0 && freqs[i] <= freqs[i - 1])
                throw parameter_domain_error("freqs", "must be strictly increasing");
            if (!std::isfinite(s21[i].real()) || !std::isfinite(s21[i].imag()))
                throw parameter_domain_error("s21", "must be finite");
        }
        if (temperature_K && *temperature_K <= 0.0)
            throw parameter_domain_error("temperature_K", "must be positive");
    }
};

} // namespace lerkit
