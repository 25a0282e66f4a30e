#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lerkit/constants.hpp"
#include "lerkit/errors.hpp"
#include "lerkit/levmar.hpp"
#include "lerkit/notch_model.hpp"
#include "lerkit/types.hpp"

namespace lerkit {

// Onset of bistability in the reduced-detuning cubic: 4*sqrt(3)/9.
inline constexpr double bifurcation_threshold = 0.7698003589194899;

enum class SweepDirection { up, down };

// Real roots, sorted ascending, of the reduced-detuning cubic
//   4 y^3 - 4 y0 y^2 + y - (y0 + a) = 0
// which is y = y0 + a/(1 + 4 y^2) cleared of denominators.
inline std::vector<double> nl_detuning_roots(double y0, double a) {
    if (!std::isfinite(y0) || !std::isfinite(a))
        throw parameter_domain_error("y0", "inputs must be finite");
    // Normalized: y^3 + b y^2 + c y + d.
    const double b = -y0;
    const double c = 0.25;
    const double d = -0.25 * (y0 + a);

    const double q = (b * b - 3.0 * c) / 9.0;
    const double r = (2.0 * b * b * b - 9.0 * b * c + 27.0 * d) / 54.0;

    std::vector<double> roots;
    if (r * r < q * q * q) {
        const double theta = std::acos(r / std::sqrt(q * q * q));
        const double s = -2.0 * std::sqrt(q);
        roots = {s * std::cos(theta / 3.0) - b / 3.0,
                 s * std::cos((theta + 2.0 * pi) / 3.0) - b / 3.0,
                 s * std::cos((theta - 2.0 * pi) / 3.0) - b / 3.0};
    } else {
        const double m = -std::copysign(std::cbrt(std::abs(r) + std::sqrt(r * r - q * q * q)), r);
        const double n = (m != 0.0) ? q / m : 0.0;
        roots = {m + n - b / 3.0};
    }

    for (auto& y : roots) {
        for (int it = 0; it < 3; ++it) {
            const double fy = ((4.0 * y - 4.0 * y0) * y + 1.0) * y - (y0 + a);
            const double dfy = (12.0 * y - 8.0 * y0) * y + 1.0;
            if (dfy == 0.0) break;
            y -= fy / dfy;
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

// Hysteretic forward model: per frequency the cubic root continuous with
// the previous point in the sweep direction is substituted as effective
// detuning in the notch response. Output order matches the input grid.
inline std::vector<cplx> s21_nonlinear(std::span<const double> freqs, const ResonatorParams& p,
                                       double a, SweepDirection dir = SweepDirection::up) {
    p.validate();
    if (!(a >= 0.0)) throw parameter_domain_error("a", "must be nonnegative");
    const double ql = p.q_l();
    const std::size_t n = freqs.size();
    std::vector<cplx> out(n);

    auto detuning = [&](double f) { return ql * (f - p.f_r) / p.f_r; };
    auto response = [&](double f, double y) {
        const cplx num = (ql / p.q_e_mag) * std::polar(1.0, p.phi);
        const cplx den(1.0, 2.0 * y);
        return p.amp * std::polar(1.0, -2.0 * pi * f * p.tau) * (1.0 - num / den);
    };

    bool have_prev = false;
    double y_prev = 0.0;
    auto visit = [&](std::size_t i) {
        const double y0 = detuning(freqs[i]);
        const auto roots = nl_detuning_roots(y0, a);
        double y = roots.front();
        const double target = have_prev ? y_prev : y0;
        for (double cand : roots)
            if (std::abs(cand - target) < std::abs(y - target)) y = cand;
        y_prev = y;
        have_prev = true;
        out[i] = response(freqs[i], y);
    };

    if (dir == SweepDirection::up)
        for (std::size_t i = 0; i < n; ++i) visit(i);
    else
        for (std::size_t i = n; i-- > 0;) visit(i);
    return out;
}

struct NonlinearTraceFit {
    double a_param = 0.0;
    double a_sigma = 0.0;
    double f_r_shift = 0.0;   // fitted drift relative to the reference f_r, Hz
    double amp_scale = 1.0;   // fitted amplitude factor on the reference amp
    double phase_offset = 0.0;
    ResonatorParams params;   // low-power reference used for the fit
    double power_W = 0.0;
    SweepDirection branch = SweepDirection::up;
    double rms_residual = 0.0;
    bool converged = false;
    bool flagged_linear = false;  // a below 3 sigma, reported as 0
};

namespace detail {

// Index of the largest adjacent |S21| step, or npos when the trace has no
// outlier step (no discontinuity).
inline std::size_t detect_jump(std::span<const cplx> s21) {
    const std::size_t n = s21.size();
    std::vector<double> steps(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) steps[i] = std::abs(std::abs(s21[i + 1]) - std::abs(s21[i]));
    std::vector<double> sorted = steps;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double med = sorted[sorted.size() / 2];
    const std::size_t arg = std::max_element(steps.begin(), steps.end()) - steps.begin();
    if (steps[arg] > 20.0 * std::max(med, 1e-12)) return arg;
    return static_cast<std::size_t>(-1);
}

} // namespace detail

// Fits (a, f_r drift, complex amplitude) with the reference Q's and phi
// held fixed; a guard band around a detected jump is excluded.
inline NonlinearTraceFit fit_nonlinear_trace(const ComplexTrace& trace, const ResonatorParams& ref,
                                             SweepDirection dir = SweepDirection::up) {
    trace.validate();
    ref.validate();
    const std::size_t n = trace.size();

    std::vector<bool> use(n, true);
    const std::size_t jump = detail::detect_jump(trace.s21);
    if (jump != static_cast<std::size_t>(-1)) {
        for (std::size_t i = (jump == 0 ? 0 : jump - 1); i <= std::min(jump + 1, n - 1); ++i)
            use[i] = false;
    }

    const double ql = ref.q_l();
    std::size_t dip = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(trace.s21[i]) < std::abs(trace.s21[dip])) dip = i;
    const double a_dip = std::max(0.05, -ql * (trace.freqs[dip] - ref.f_r) / ref.f_r);

    // The cost is nearly discontinuous in a (the fold position moves bin
    // by bin), so scan coarsely first with the complex scale solved in
    // closed form, then polish with the damped least squares.
    cplx best_scale(1.0, 0.0);
    double a0 = 0.0, best_cost = 1e300;
    const double a_max = std::max(6.0, 4.0 * a_dip);
    std::vector<double> candidates = {0.0};
    for (double a_cand = 0.02; a_cand <= a_max; a_cand *= 1.06) candidates.push_back(a_cand);
    for (double a_cand : candidates) {
        const auto model = s21_nonlinear(trace.freqs, ref, a_cand, dir);
        cplx md(0.0, 0.0);
        double mm = 0.0, dd = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!use[i]) continue;
            md += std::conj(model[i]) * trace.s21[i];
            mm += std::norm(model[i]);
            dd += std::norm(trace.s21[i]);
        }
        const double cost = dd - std::norm(md) / mm;
        if (cost < best_cost) {
            best_cost = cost;
            a0 = a_cand;
            best_scale = md / mm;
        }
    }

    // p = (a, f_r shift / linewidth, ln scale, phase offset)
    const double linewidth = ref.f_r / ql;
    auto build_model = [&](const Eigen::VectorXd& p) {
        ResonatorParams mp = ref;
        mp.f_r = ref.f_r + p[1] * linewidth;
        mp.amp = ref.amp * std::exp(p[2]);
        const double a = std::max(p[0], 0.0);
        auto model = s21_nonlinear(trace.freqs, mp, a, dir);
        const cplx rot = std::polar(1.0, p[3]);
        for (auto& z : model) z *= rot;
        return model;
    };
    auto residuals = [&](const Eigen::VectorXd& p) {
        const auto model = build_model(p);
        Eigen::VectorXd r(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            const cplx diff = use[i] ? (model[i] - trace.s21[i]) / ref.amp : cplx(0.0, 0.0);
            r[2 * i] = diff.real();
            r[2 * i + 1] = diff.imag();
        }
        return r;
    };

    Eigen::VectorXd p0(4);
    p0 << a0, 0.0, std::log(std::max(std::abs(best_scale), 1e-6)), std::arg(best_scale);
    LevMar lm(residuals);
    const auto res = lm.minimize(p0);

    NonlinearTraceFit out;
    out.params = ref;
    out.branch = dir;
    out.converged = res.converged;
    out.rms_residual = res.rms;
    out.a_param = std::max(res.params[0], 0.0);
    out.a_sigma = std::sqrt(std::max(0.0, res.covariance(0, 0)));
    out.f_r_shift = res.params[1] * linewidth;
    out.amp_scale = std::exp(res.params[2]);
    out.phase_offset = res.params[3];
    if (trace.power_dBm) out.power_W = dbm_to_watts(*trace.power_dBm);
    if (out.a_param < 3.0 * out.a_sigma) {
        out.a_param = 0.0;
        out.flagged_linear = true;
    }
    return out;
}

struct InductorGeometry {
    double area_m2 = 0.0;    // inductor cross-section
    double length_m = 0.0;   // inductor length
};

struct NonlinearScale {
    double e_star = 0.0;        // J
    double e_star_sigma = 0.0;  // J
    double j_star = 0.0;        // A/cm^2, filled by j_star_from_e_star
    double slope = 0.0;         // a per watt
    double slope_sigma = 0.0;
    double l_k = 0.0;
    double alpha_k = 0.0;
    InductorGeometry geometry;
    bool model_violation = false;  // a vs P_d curvature beyond 3 sigma
};

// Zero-intercept regression of a on P_d; the loaded Q of the low-power
// reference enters E* = 2 Q_l^3 / (Q_c f_r slope).
inline NonlinearScale fit_a_vs_power(std::span<const NonlinearTraceFit> fits,
                                     const ResonatorParams& ref) {
    ref.validate();
    std::vector<const NonlinearTraceFit*> used;
    for (const auto& f : fits)
        if (!f.flagged_linear && f.power_W > 0.0) used.push_back(&f);
    if (used.size() < 4)
        throw parameter_domain_error("fits", "need at least 4 nonlinear powers");

    double swp = 0.0, swpp = 0.0;
    for (const auto* f : used) {
        const double sig = f->a_sigma > 0.0 ? f->a_sigma : 1.0;
        const double w = 1.0 / (sig * sig);
        swp += w * f->a_param * f->power_W;
        swpp += w * f->power_W * f->power_W;
    }
    const double slope = swp / swpp;

    double chi2 = 0.0;
    for (const auto* f : used) {
        const double sig = f->a_sigma > 0.0 ? f->a_sigma : 1.0;
        const double r = (f->a_param - slope * f->power_W) / sig;
        chi2 += r * r;
    }
    const double chi2_red = chi2 / std::max<std::size_t>(used.size() - 1, 1);
    const double slope_sigma = std::sqrt(std::max(chi2_red, 1.0) / swpp);

    // Curvature probe for departures from a ~ P_d.
    double sw2 = 0, sw3 = 0, sw4 = 0, swa1 = 0, swa2 = 0;
    for (const auto* f : used) {
        const double sig = f->a_sigma > 0.0 ? f->a_sigma : 1.0;
        const double w = 1.0 / (sig * sig), P = f->power_W;
        sw2 += w * P * P;
        sw3 += w * P * P * P;
        sw4 += w * P * P * P * P;
        swa1 += w * f->a_param * P;
        swa2 += w * f->a_param * P * P;
    }
    const double det = sw2 * sw4 - sw3 * sw3;
    bool violation = false;
    if (std::abs(det) > 1e-300) {
        const double quad = (sw2 * swa2 - sw3 * swa1) / det;
        const double quad_sigma = std::sqrt(std::max(chi2_red, 1.0) * sw2 / det);
        violation = std::abs(quad) > 3.0 * quad_sigma;
    }

    const double ql = ref.q_l();
    NonlinearScale out;
    out.slope = slope;
    out.slope_sigma = slope_sigma;
    out.e_star = 2.0 * ql * ql * ql / (ref.q_c() * ref.f_r * slope);
    out.e_star_sigma = out.e_star * slope_sigma / slope;
    out.model_violation = violation;
    return out;
}

// Current-density scale from the energy scale. The conversion treats E* as
// the total inductive energy scale, L_tot = L_k/alpha_k, integrated over
// the inductor volume with C_geom = 2 * area * length:
//   E* = L_k J*^2 C_geom / alpha_k^2   =>   J* = alpha_k sqrt(E*/(L_k C_geom))
// Result in A/cm^2.
inline double j_star_from_e_star(double e_star, double l_k, double alpha_k,
                                 const InductorGeometry& geom) {
    if (!(e_star > 0.0)) throw parameter_domain_error("e_star", "must be positive");
    if (!(l_k > 0.0)) throw parameter_domain_error("l_k", "must be positive");
    if (!(alpha_k > 0.0 && alpha_k < 1.0))
        throw parameter_domain_error("alpha_k", "must lie in (0,1)");
    if (!(geom.area_m2 > 0.0) || !(geom.length_m > 0.0))
        throw parameter_domain_error("geometry",
                                     "inductor area and length must be configured explicitly");
    const double c_geom = 2.0 * geom.area_m2 * geom.length_m;
    const double j_m2 = alpha_k * std::sqrt(e_star / (l_k * c_geom));
    return j_m2 * 1e-4;  // A/m^2 -> A/cm^2
}

} // namespace lerkit
