#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lerkit/constants.hpp"
#include "lerkit/errors.hpp"
#include "lerkit/mattis_bardeen.hpp"
#include "lerkit/nonlinear.hpp"
#include "lerkit/notch_model.hpp"
#include "lerkit/rng.hpp"
#include "lerkit/tls.hpp"
#include "lerkit/types.hpp"

namespace lerkit {

struct NoiseSpec {
    double additive_sigma = 1e-3;  // complex additive Gaussian, per quadrature, units of baseline
    double amp_jitter = 0.0;       // multiplicative amplitude jitter per point
};

// Everything the forward model needs for one resonator, plus the chip
// metadata (l_g, f_sim) the kinetics analysis consumes.
struct SynthResonator {
    std::string label;
    double f_r0 = 0.0;  // Hz at the reference temperature, low power
    double q_e_mag = 0.0;
    double phi = 0.0;
    MBMaterial mat;
    TLSParams tls;
    double e_star = 0.0;  // J
    double l_g = 0.0;     // H/sq
    double f_sim = 0.0;   // Hz, perfect-conductor resonance
};

struct ChipSpec {
    std::vector<SynthResonator> resonators;
    double feedline_amp = 1.0;
    double feedline_delay = 0.0;  // s
    NoiseSpec noise;
    std::uint64_t seed = 0;  // mandatory; callers must set explicitly
    double t_ref_K = 0.015;
    double attenuation_dB = 60.0;  // source power -> chip power
    std::string material_tag;
};

// Self-consistent operating point at (T, P): photon number, effective Q_i
// (MB + TLS), the TLS-saturation frequency pull and the nonlinearity a.
struct OperatingPoint {
    double f_r = 0.0;
    double q_i = 0.0;
    double q_l = 0.0;
    double n_photons = 0.0;
    double a = 0.0;
};

namespace detail {

// Saturable reactive TLS pull. The loss model fixes the scale; the upshift
// follows the same (1+n/n_c)^-beta saturation so that the low-power Nb
// frequency rises with drive before the kinetic nonlinearity takes over.
inline double tls_upshift(double n, const TLSParams& tls, double temperature_K, double f_r) {
    const double th = std::tanh(planck_h * f_r / (2.0 * boltzmann_kB * temperature_K));
    return tls.f_delta0 * th / pi * (1.0 - std::pow(1.0 + n / tls.n_c, -tls.beta));
}

} // namespace detail

inline OperatingPoint operating_point(const SynthResonator& r, double temperature_K,
                                      double power_dBm_chip, double t_ref_K = 0.015) {
    r.mat.validate();
    r.tls.validate();
    const double power_W = dbm_to_watts(power_dBm_chip);
    const double q_c = r.q_e_mag / std::cos(r.phi);

    const auto mb = mb_observables(r.mat, temperature_K, r.f_r0, t_ref_K);

    OperatingPoint op;
    double n = 0.0;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        const double qi_inv = mb.q_i_inv + tls_loss(n, r.tls, temperature_K, r.f_r0);
        const double f_r =
            r.f_r0 * (1.0 + mb.delta_fr + detail::tls_upshift(n, r.tls, temperature_K, r.f_r0));
        const double q_l = 1.0 / (qi_inv + 1.0 / q_c);
        const double n_new = q_l * q_l / (pi * q_c) * power_W / (planck_h * f_r * f_r);
        op.f_r = f_r;
        op.q_i = 1.0 / qi_inv;
        op.q_l = q_l;
        op.n_photons = n_new;
        if (std::abs(n_new - n) <= 1e-9 * std::max(n_new, 1.0)) {
            converged = true;
            n = n_new;
            break;
        }
        n = n_new;
    }
    if (!converged)
        throw simulation_error("photon-number fixed point did not converge for " + r.label);
    op.a = 2.0 * op.q_l * op.q_l * op.q_l / (q_c * op.f_r) * power_W / r.e_star;
    return op;
}

inline std::vector<double> make_grid(double center_hz, double span_hz, std::size_t n_points) {
    std::vector<double> f(n_points);
    for (std::size_t i = 0; i < n_points; ++i)
        f[i] = center_hz + span_hz * (static_cast<double>(i) / (n_points - 1) - 0.5);
    return f;
}

// Single-resonator sweep at fixed conditions. The trace gets the additive
// complex noise and optional amplitude jitter of the chip spec.
inline ComplexTrace simulate_trace(const SynthResonator& r, std::span<const double> fgrid,
                                   double temperature_K, double power_dBm_chip, SweepDirection dir,
                                   const NoiseSpec& noise, Rng& rng, double t_ref_K = 0.015) {
    const auto op = operating_point(r, temperature_K, power_dBm_chip, t_ref_K);

    ResonatorParams p;
    p.f_r = op.f_r;
    p.q_i = op.q_i;
    p.q_e_mag = r.q_e_mag;
    p.phi = r.phi;
    p.amp = 1.0;
    p.tau = 0.0;

    std::vector<double> freqs(fgrid.begin(), fgrid.end());
    std::vector<cplx> s21 = op.a > 0.01 ? s21_nonlinear(freqs, p, op.a, dir)
                                        : s21_notch(freqs, p);

    ComplexTrace tr;
    tr.freqs = std::move(freqs);
    tr.s21 = std::move(s21);
    tr.temperature_K = temperature_K;
    tr.power_dBm = power_dBm_chip;
    tr.label = r.label;
    for (auto& z : tr.s21) {
        if (noise.amp_jitter > 0.0) z *= 1.0 + noise.amp_jitter * rng.gaussian();
        z += noise.additive_sigma * cplx(rng.gaussian(), rng.gaussian());
    }
    return tr;
}

// Grid centered on the operating point, sized in linewidths; widens with a
// so that the bifurcation fold stays inside the span.
inline ComplexTrace simulate_trace_auto(const SynthResonator& r, double temperature_K,
                                        double power_dBm_chip, SweepDirection dir,
                                        const NoiseSpec& noise, Rng& rng,
                                        double span_linewidths = 10.0, std::size_t n_points = 2001,
                                        double t_ref_K = 0.015) {
    const auto op = operating_point(r, temperature_K, power_dBm_chip, t_ref_K);
    const double lw = op.f_r / op.q_l;
    const double span = std::max(span_linewidths, 6.0 * op.a + 10.0) * lw;
    const double center = op.f_r - 0.5 * op.a * lw;
    const auto grid = make_grid(center, span, n_points);
    return simulate_trace(r, grid, temperature_K, power_dBm_chip, dir, noise, rng, t_ref_K);
}

// Full feedline transmission: product of per-resonator notch factors times
// the feedline baseline. Valid only when resonances are far apart.
inline ComplexTrace simulate_chip(const ChipSpec& spec, std::span<const double> fgrid,
                                  double temperature_K, double power_dBm_chip, Rng& rng) {
    if (spec.resonators.size() > 1) {
        std::vector<std::pair<double, double>> fr_lw;
        for (const auto& r : spec.resonators) {
            const auto op = operating_point(r, temperature_K, power_dBm_chip, spec.t_ref_K);
            fr_lw.emplace_back(op.f_r, op.f_r / op.q_l);
        }
        std::sort(fr_lw.begin(), fr_lw.end());
        for (std::size_t i = 0; i + 1 < fr_lw.size(); ++i) {
            const double sep = fr_lw[i + 1].first - fr_lw[i].first;
            if (sep < 10.0 * std::max(fr_lw[i].second, fr_lw[i + 1].second))
                throw simulation_error("resonances closer than 10 linewidths");
        }
    }

    ComplexTrace tr;
    tr.freqs.assign(fgrid.begin(), fgrid.end());
    tr.s21.assign(fgrid.size(), cplx(1.0, 0.0));
    tr.temperature_K = temperature_K;
    tr.power_dBm = power_dBm_chip;
    tr.label = spec.material_tag.empty() ? "chip" : spec.material_tag;

    for (const auto& r : spec.resonators) {
        const auto op = operating_point(r, temperature_K, power_dBm_chip, spec.t_ref_K);
        ResonatorParams p;
        p.f_r = op.f_r;
        p.q_i = op.q_i;
        p.q_e_mag = r.q_e_mag;
        p.phi = r.phi;
        const auto factor = s21_notch(tr.freqs, p);
        for (std::size_t i = 0; i < tr.s21.size(); ++i) tr.s21[i] *= factor[i];
    }
    for (std::size_t i = 0; i < tr.s21.size(); ++i) {
        tr.s21[i] *= spec.feedline_amp *
                     std::polar(1.0, -2.0 * pi * tr.freqs[i] * spec.feedline_delay);
        if (spec.noise.amp_jitter > 0.0) tr.s21[i] *= 1.0 + spec.noise.amp_jitter * rng.gaussian();
        tr.s21[i] += spec.noise.additive_sigma * spec.feedline_amp *
                     cplx(rng.gaussian(), rng.gaussian());
    }
    return tr;
}

// Direct sweep-point generators used by the fitter Monte Carlo suites.

// Relative noise on each observable: the frequency shift and Q_i are both
// measured quantities, so `noise_frac` multiplies each one per point.
inline std::vector<MBSweepPoint> mb_sweep_points(const MBMaterial& mat, double f_r0,
                                                 std::span<const double> temps, double noise_frac,
                                                 Rng& rng) {
    double t_ref = temps[0];
    for (double t : temps) t_ref = std::min(t_ref, t);
    std::vector<MBSweepPoint> out(temps.size());
    for (std::size_t i = 0; i < temps.size(); ++i) {
        const auto obs = mb_observables(mat, temps[i], f_r0, t_ref);
        out[i].temperature_K = temps[i];
        out[i].f_r = f_r0 * (1.0 + obs.delta_fr * (1.0 + noise_frac * rng.gaussian()));
        const double q = obs.q_i_inv * (1.0 + noise_frac * rng.gaussian());
        out[i].q_i = 1.0 / std::max(q, 1e-300);
    }
    return out;
}

inline std::vector<TLSSweepPoint> tls_sweep_points(const TLSParams& tls, double temperature_K,
                                                   double f_r, std::span<const double> ns,
                                                   double noise_frac, Rng& rng) {
    std::vector<TLSSweepPoint> out(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
        out[i].n = ns[i];
        const double q = 1.0 / tls_loss(ns[i], tls, temperature_K, f_r);
        out[i].q_i = q * (1.0 + noise_frac * rng.gaussian());
    }
    return out;
}

// Twelve-resonator chip built from the published working point of this
// device family: three anchor designs carry measured values, the rest are
// interpolated with a deterministic spread.
inline ChipSpec make_paper_chip(const std::string& material, std::uint64_t seed) {
    const bool gold = material == "Nb/Au" || material == "NbAu" || material == "nbau";
    if (!gold && material != "Nb" && material != "nb")
        throw parameter_domain_error("material", "expected Nb or Nb/Au");

    struct Anchor {
        double f_r, n_c, beta, f_delta0, q_i_sat, e_star;
    };
    // LER1, LER4, LER8 for each material.
    const Anchor nb[3] = {
        {1.578422e9, 1.02e9, 8.46e-2, 2.48e-6, 8.80e5, 7.50e-7},
        {1.644296e9, 7.46e8, 1.14e-1, 1.81e-6, 8.72e5, 7.28e-7},
        {1.797254e9, 6.93e7, 1.15e-1, 1.97e-6, 9.52e5, 5.49e-7},
    };
    const Anchor nbau[3] = {
        {1.551530e9, 4.41e5, 3.05e-2, 8.77e-7, 9.64e5, 1.16e-7},
        {1.613699e9, 3.40e6, 4.81e-2, 6.07e-7, 9.99e5, 9.03e-8},
        {1.753702e9, 2.59e6, 4.65e-2, 9.74e-7, 9.91e5, 7.33e-8},
    };
    const Anchor* anchors = gold ? nbau : nb;
    const double alpha_mb = gold ? 0.103 : 0.063;
    const double t_c = gold ? 7.3 : 8.7;
    const double alpha_lk = gold ? 0.094 : 0.057;  // Eq-2 style kinetic fraction
    const double l_g = 2.1506e-12;                 // H/sq

    ChipSpec chip;
    chip.seed = seed;
    chip.material_tag = gold ? "Nb/Au" : "Nb";

    auto f_r_of = [&](int d) {  // design index 1..12, linear between anchors
        if (d <= 4)
            return anchors[0].f_r + (anchors[1].f_r - anchors[0].f_r) * (d - 1) / 3.0;
        return anchors[1].f_r + (anchors[2].f_r - anchors[1].f_r) * (d - 4) / 4.0;
    };
    auto nearest_anchor = [&](int d) -> const Anchor& {
        if (d <= 2) return anchors[0];
        if (d <= 6) return anchors[1];
        return anchors[2];
    };

    for (int d = 1; d <= 12; ++d) {
        const Anchor& a = nearest_anchor(d);
        const bool is_anchor = d == 1 || d == 4 || d == 8;
        const double spread = is_anchor ? 0.0 : 0.03 * (static_cast<int>(d * 7 % 5) - 2);

        SynthResonator r;
        r.label = "LER" + std::to_string(d);
        r.f_r0 = f_r_of(d);
        r.q_e_mag = 7.90e4 * (1.0 + 0.04 * (static_cast<int>(d * 3 % 7) - 3) / 3.0);
        r.phi = 0.02 * (static_cast<int>(d * 5 % 3) - 1);
        r.mat = MBMaterial::bcs(t_c, alpha_mb * (1.0 + spread));
        r.tls.n_c = a.n_c * (1.0 + spread);
        r.tls.beta = a.beta;
        r.tls.f_delta0 = a.f_delta0 * (1.0 + spread);
        r.tls.q_i_sat = a.q_i_sat * (1.0 + 0.5 * spread);
        r.e_star = a.e_star * (1.0 + spread);
        r.l_g = l_g;
        const double alpha_d = alpha_lk * (1.0 + spread);
        r.f_sim = r.f_r0 / std::sqrt(1.0 - alpha_d);
        chip.resonators.push_back(std::move(r));
    }
    return chip;
}

} // namespace lerkit
