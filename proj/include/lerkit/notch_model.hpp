#pragma once

#include <complex>
#include <span>
#include <vector>

#include "lerkit/constants.hpp"
#include "lerkit/types.hpp"

namespace lerkit {

// Notch-port transmission at a single frequency:
//   S21(f) = amp * exp(-2*pi*i*f*tau) * [1 - (Q_l/|Q_e|) e^{i phi} / (1 + 2i Q_l (f-f_r)/f_r)]
// With tau = 0 this is the bare resonator response.
inline cplx s21_notch_at(double f, const ResonatorParams& p) {
    const double ql = p.q_l();
    const cplx num = (ql / p.q_e_mag) * std::polar(1.0, p.phi);
    const cplx den(1.0, 2.0 * ql * (f - p.f_r) / p.f_r);
    const cplx env = p.amp * std::polar(1.0, -2.0 * pi * f * p.tau);
    return env * (1.0 - num / den);
}

inline std::vector<cplx> s21_notch(std::span<const double> freqs, const ResonatorParams& p) {
    p.validate();
    std::vector<cplx> out;
    out.reserve(freqs.size());
    for (double f : freqs) {
        if (!std::isfinite(f) || f <= 0.0)
            throw parameter_domain_error("f", "must be positive and finite");
        out.push_back(s21_notch_at(f, p));
    }
    return out;
}

inline double loaded_q(const ResonatorParams& p) {
    p.validate();
    return p.q_l();
}

// Mean intracavity photon number at drive power P (watts):
//   <n> = (Q_l^2 / (pi Q_c)) * P / (h f_r^2)
inline double photon_number(const ResonatorParams& p, double power_W) {
    p.validate();
    if (!std::isfinite(power_W) || power_W < 0.0)
        throw parameter_domain_error("power_W", "must be nonnegative and finite");
    const double ql = p.q_l();
    return ql * ql / (pi * p.q_c()) * power_W / (planck_h * p.f_r * p.f_r);
}

} // namespace lerkit
