#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "lerkit/circle_fit.hpp"
#include "lerkit/constants.hpp"
#include "lerkit/errors.hpp"
#include "lerkit/levmar.hpp"
#include "lerkit/notch_model.hpp"
#include "lerkit/segmentation.hpp"
#include "lerkit/types.hpp"

namespace lerkit {

struct ParamSigmas {
    double f_r = 0, q_i = 0, q_e_mag = 0, phi = 0, amp = 0, tau = 0;
    double q_c = 0;  // derived via delta method
};

struct FitResult {
    ResonatorParams params;
    ParamSigmas sigmas;
    Eigen::Matrix<double, 6, 6> covariance =
        Eigen::Matrix<double, 6, 6>::Zero();  // (f_r, q_i, q_e_mag, phi, amp, tau)
    double rms_residual = 0.0;                // per-quadrature rms, normalized to baseline amplitude
    double rms_staged = 0.0;                  // rms of the circle+phase estimate before refinement
    int n_points = 0;
    bool converged = false;
    bool q_i_clamped = false;  // decomposition hit Q_l >= |Q_e| at some stage
    std::string label;
};

struct PreprocessResult {
    ComplexTrace trace;  // delay-corrected, baseline-normalized
    double tau = 0.0;
    cplx baseline{1.0, 0.0};  // complex off-resonant level at the trace center
    double linewidth_est = 0.0;
    bool span_warning = false;  // span < 3 linewidths
};

struct PhaseFit {
    double f_r = 0.0;
    double q_l = 0.0;
    double theta0 = 0.0;
};

namespace detail {

// All delay phases are referenced to the trace center frequency: removal
// multiplies by exp(+2 pi i (f - f_mid) tau). This keeps the delay
// direction orthogonal to the global phase during refinement.

inline double center_freq(const ComplexTrace& tr) {
    return 0.5 * (tr.freqs.front() + tr.freqs.back());
}

inline std::vector<cplx> remove_delay(const ComplexTrace& tr, double tau) {
    const double f_mid = center_freq(tr);
    std::vector<cplx> out(tr.size());
    for (std::size_t i = 0; i < tr.size(); ++i)
        out[i] = tr.s21[i] * std::polar(1.0, 2.0 * pi * (tr.freqs[i] - f_mid) * tau);
    return out;
}

inline std::vector<double> unwrap_phase(std::span<const cplx> z, const cplx& center) {
    std::vector<double> theta(z.size());
    double prev = std::arg(z[0] - center);
    theta[0] = prev;
    for (std::size_t i = 1; i < z.size(); ++i) {
        double t = std::arg(z[i] - center);
        while (t - prev > pi) t -= 2.0 * pi;
        while (t - prev < -pi) t += 2.0 * pi;
        theta[i] = t;
        prev = t;
    }
    return theta;
}

// FWHM-style linewidth of the deepest dip in |s21|.
struct DipEstimate {
    std::size_t min_index = 0;
    double linewidth = 0.0;
    double baseline_mag = 0.0;
    double depth = 0.0;
    bool left_cross = false, right_cross = false;
};

inline DipEstimate estimate_dip(const ComplexTrace& tr) {
    const std::size_t n = tr.size();
    const std::size_t tail = std::max<std::size_t>(2, n / 5);
    std::vector<double> mags(n);
    for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(tr.s21[i]);

    std::vector<double> tails;
    tails.insert(tails.end(), mags.begin(), mags.begin() + tail);
    tails.insert(tails.end(), mags.end() - tail, mags.end());
    std::nth_element(tails.begin(), tails.begin() + tails.size() / 2, tails.end());
    const double base = tails[tails.size() / 2];

    DipEstimate d;
    d.baseline_mag = base;
    d.min_index = std::min_element(mags.begin(), mags.end()) - mags.begin();
    d.depth = base - mags[d.min_index];

    const double half = 0.5 * (base + mags[d.min_index]);
    double f_lo = tr.freqs.front(), f_hi = tr.freqs.back();
    for (std::size_t i = d.min_index; i-- > 0;) {
        if (mags[i] >= half) {
            const double t = (half - mags[i]) / (mags[i + 1] - mags[i]);
            f_lo = tr.freqs[i] + t * (tr.freqs[i + 1] - tr.freqs[i]);
            d.left_cross = true;
            break;
        }
    }
    for (std::size_t i = d.min_index + 1; i < n; ++i) {
        if (mags[i] >= half) {
            const double t = (half - mags[i - 1]) / (mags[i] - mags[i - 1]);
            f_hi = tr.freqs[i - 1] + t * (tr.freqs[i] - tr.freqs[i - 1]);
            d.right_cross = true;
            break;
        }
    }
    if (d.left_cross && d.right_cross)
        d.linewidth = f_hi - f_lo;
    else if (d.left_cross || d.right_cross)
        d.linewidth = 2.0 * std::max(f_hi - tr.freqs[d.min_index], tr.freqs[d.min_index] - f_lo);
    return d;
}

// Least-squares slope of unwrapped tail phase vs frequency; coarse delay seed.
inline double tail_delay_seed(const ComplexTrace& tr) {
    const std::size_t n = tr.size();
    const std::size_t tail = std::max<std::size_t>(2, n / 5);
    std::vector<double> fs, ph;
    auto add = [&](std::size_t i) {
        fs.push_back(tr.freqs[i]);
        ph.push_back(std::arg(tr.s21[i]));
    };
    for (std::size_t i = 0; i < tail; ++i) add(i);
    for (std::size_t i = n - tail; i < n; ++i) add(i);
    for (std::size_t i = 1; i < ph.size(); ++i) {
        while (ph[i] - ph[i - 1] > pi) ph[i] -= 2.0 * pi;
        while (ph[i] - ph[i - 1] < -pi) ph[i] += 2.0 * pi;
    }
    double sf = 0, sp = 0, sff = 0, sfp = 0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
        sf += fs[i];
        sp += ph[i];
        sff += fs[i] * fs[i];
        sfp += fs[i] * ph[i];
    }
    const double m = static_cast<double>(fs.size());
    const double slope = (m * sfp - sf * sp) / (m * sff - sf * sf);
    return -slope / (2.0 * pi);
}

// Coarse delay from circle closure: the delay-corrected notch trace lies
// on a circle, so the circle-fit residual dips at the true delay.
inline double refine_delay(const ComplexTrace& tr, double tau_seed) {
    const double span = tr.freqs.back() - tr.freqs.front();
    const double w = 0.45 / span;
    auto objective = [&](double tau) { return circle_fit(remove_delay(tr, tau)).rms_residual; };
    double a = tau_seed - w, b = tau_seed + w;
    const double gr = 0.6180339887498949;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = objective(x1), f2 = objective(x2);
    for (int i = 0; i < 90 && b - a > 0.0; ++i) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = objective(x2);
        }
    }
    return 0.5 * (a + b);
}

} // namespace detail

// Fits theta(f) = theta0 + 2*atan(2 Q_l (1 - f/f_r)) to the phase of the
// trace points re-centered on the resonance circle.
inline PhaseFit phase_fit(const ComplexTrace& trace, const cplx& center) {
    trace.validate();
    const auto theta = detail::unwrap_phase(trace.s21, center);
    const auto& f = trace.freqs;
    const std::size_t n = theta.size();

    const double swing = theta.front() - theta.back();
    if (swing < 0.3)
        throw degenerate_fit_error("q_l", "phase swing is too small or has the wrong sign");

    // Initial f_r: crossing of the phase midpoint; initial Q_l from the
    // local slope there (d theta/df at resonance is -4 Q_l / f_r).
    const double mid = 0.5 * (theta.front() + theta.back());
    std::size_t k = 0;
    while (k + 1 < n && !(theta[k] >= mid && theta[k + 1] < mid)) ++k;
    if (k + 1 >= n) k = n / 2;
    const double fr0 = f[k];
    const std::size_t step = std::max<std::size_t>(1, n / 100);
    const std::size_t k2 = std::min(k + step, n - 1);
    const std::size_t k1 = k >= step ? k - step : 0;
    const double slope = (theta[k2] - theta[k1]) / (f[k2] - f[k1]);
    const double ql0 = std::max(1.0, -slope * fr0 / 4.0);

    // Detuning measured in span units keeps the step criterion meaningful
    // across the ~1e9 dynamic range of raw frequencies.
    const double span = f.back() - f.front();
    Eigen::VectorXd p0(3);
    p0 << 0.0, std::log(ql0), theta[k];
    LevMar lm([&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        const double fr = fr0 + p[0] * span, ql = std::exp(p[1]), t0 = p[2];
        for (std::size_t i = 0; i < n; ++i)
            r[i] = t0 + 2.0 * std::atan(2.0 * ql * (1.0 - f[i] / fr)) - theta[i];
        return r;
    });
    const auto res = lm.minimize(p0);
    if (!res.converged && res.rms > 0.5)
        throw degenerate_fit_error("f_r", "phase-frequency fit did not converge");

    PhaseFit out;
    out.f_r = fr0 + res.params[0] * span;
    out.q_l = std::exp(res.params[1]);
    out.theta0 = res.params[2];
    if (out.f_r < f.front() || out.f_r > f.back())
        throw degenerate_fit_error("f_r", "resonance outside the measured span");
    return out;
}

namespace detail {

struct StagedEstimate {
    ResonatorParams params;  // tau included; amp is the baseline magnitude
    double chi = 0.0;        // global phase at the trace center
    bool q_i_clamped = false;
};

// Geometric decomposition of the circle + phase stages applied to a
// delay-corrected trace (center-referenced convention).
inline StagedEstimate stage_at_delay(const ComplexTrace& trace, double tau) {
    ComplexTrace corrected = trace;
    corrected.s21 = remove_delay(trace, tau);
    const auto circ = circle_fit(corrected.s21);
    const auto ph = phase_fit(corrected, circ.center);

    const cplx off = circ.center + circ.radius * std::polar(1.0, ph.theta0 + pi);
    const double lambda = 2.0 * circ.radius / std::abs(off);  // Q_l/|Q_e|
    double phi = ph.theta0 + pi - std::arg(off);
    while (phi > pi) phi -= 2.0 * pi;
    while (phi < -pi) phi += 2.0 * pi;

    StagedEstimate st;
    if (std::abs(phi) >= 0.5 * pi) {
        phi = std::clamp(phi, -1.45, 1.45);
        st.q_i_clamped = true;
    }

    const double q_l = ph.q_l;
    const double q_e = q_l / lambda;
    const double q_c = q_e / std::cos(phi);
    double inv_qi = 1.0 / q_l - 1.0 / q_c;
    if (inv_qi <= 0.0) {
        inv_qi = 1e-9;  // Q_i sentinel 1e9
        st.q_i_clamped = true;
    }

    st.params.f_r = ph.f_r;
    st.params.q_i = 1.0 / inv_qi;
    st.params.q_e_mag = q_e;
    st.params.phi = phi;
    st.params.amp = std::abs(off);
    st.params.tau = tau;
    st.chi = std::arg(off);
    return st;
}

// Joint full-model refinement in scaled coordinates:
//   p = ((f_r-f_c)/lw, ln q_i, ln q_e, phi, ln amp, chi, 2 pi span tau)
// with the environment phase chi - 2 pi (f - f_mid) tau.
struct FullRefine {
    ResonatorParams params;
    double chi = 0.0;
    Eigen::MatrixXd covariance;  // internal scaled basis, 7x7
    double rms = 0.0;
    double rms_start = 0.0;
    bool converged = false;
    double lw = 0.0, span = 0.0;
};

inline FullRefine refine_full_model(const ComplexTrace& trace, const StagedEstimate& staged) {
    const std::size_t n = trace.size();
    const double f_mid = center_freq(trace);
    const double f_c = staged.params.f_r;
    const double lw = f_c / staged.params.q_l();
    const double span = trace.freqs.back() - trace.freqs.front();
    const double norm = staged.params.amp;

    auto residuals = [&](const Eigen::VectorXd& p) {
        const double f_r = f_c + p[0] * lw;
        const double q_i = std::exp(p[1]);
        const double q_e = std::exp(p[2]);
        const double phi = p[3];
        const double amp = std::exp(p[4]);
        const double chi = p[5];
        const double tau = p[6] / (2.0 * pi * span);
        const double q_c = q_e / std::cos(phi);
        const double q_l = 1.0 / (1.0 / q_i + 1.0 / q_c);
        const cplx num = (q_l / q_e) * std::polar(1.0, phi);
        Eigen::VectorXd r(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            const double f = trace.freqs[i];
            const cplx den(1.0, 2.0 * q_l * (f - f_r) / f_r);
            const cplx model = amp * std::polar(1.0, chi - 2.0 * pi * (f - f_mid) * tau) *
                               (1.0 - num / den);
            const cplx d = model - trace.s21[i];
            r[2 * i] = d.real() / norm;
            r[2 * i + 1] = d.imag() / norm;
        }
        return r;
    };

    Eigen::VectorXd p0(7);
    p0 << 0.0, std::log(staged.params.q_i), std::log(staged.params.q_e_mag), staged.params.phi,
        std::log(staged.params.amp), std::remainder(staged.chi, 2.0 * pi),
        2.0 * pi * span * staged.params.tau;

    FullRefine out;
    out.lw = lw;
    out.span = span;
    out.rms_start = std::sqrt(residuals(p0).squaredNorm() / (2.0 * n));

    LevMar lm(residuals);
    const auto res = lm.minimize(p0);
    out.converged = res.converged;
    out.rms = res.rms;
    out.covariance = res.covariance;

    const auto& p = res.params;
    out.params.f_r = f_c + p[0] * lw;
    out.params.q_i = std::exp(p[1]);
    out.params.q_e_mag = std::exp(p[2]);
    out.params.phi = p[3];
    out.params.amp = std::exp(p[4]);
    out.params.tau = p[6] / (2.0 * pi * span);
    out.chi = p[5];
    return out;
}

} // namespace detail

// Delay correction and baseline normalization. The delay seed comes from
// the linear tail-phase fit, is refined by circle closure, and is pinned
// by a full-model polish; the returned trace has off-resonant level 1+0i.
inline PreprocessResult preprocess(const ComplexTrace& trace) {
    trace.validate();
    const auto dip = detail::estimate_dip(trace);
    const double span = trace.freqs.back() - trace.freqs.front();
    if (!dip.left_cross && !dip.right_cross)
        throw unfittable_trace_error("no resolvable resonance dip within the span");

    const double tau_seed = detail::tail_delay_seed(trace);
    double tau = detail::refine_delay(trace, tau_seed);
    cplx baseline(1.0, 0.0);
    const auto staged = detail::stage_at_delay(trace, tau);

    // The staged Q_l gives the linewidth the span checks are quoted in.
    const double lw = staged.params.f_r / staged.params.q_l();
    if (span < lw) throw unfittable_trace_error("span is below one linewidth");

    try {
        const auto refined = detail::refine_full_model(trace, staged);
        tau = refined.params.tau;
        baseline = refined.params.amp * std::polar(1.0, refined.chi);
    } catch (const error&) {
        baseline = staged.params.amp * std::polar(1.0, staged.chi);
    }

    PreprocessResult out;
    out.trace = trace;
    out.trace.s21 = detail::remove_delay(trace, tau);
    for (auto& z : out.trace.s21) z /= baseline;
    out.tau = tau;
    out.baseline = baseline;
    out.linewidth_est = lw;
    out.span_warning = span < 3.0 * lw;
    return out;
}

// Full pipeline: preprocess -> circle fit -> phase fit -> decomposition ->
// joint complex least-squares refinement with covariance. Multi-dip traces
// are narrowed to the deepest dip; chip-level segmentation is the CLI's job.
inline FitResult fit_resonance(const ComplexTrace& trace) {
    trace.validate();
    {
        const auto dips = find_dips(trace);
        if (dips.size() > 1) {
            const auto deepest = *std::max_element(
                dips.begin(), dips.end(),
                [](const DipWindow& a, const DipWindow& b) { return a.depth_db < b.depth_db; });
            ComplexTrace window = extract_window(trace, deepest);
            window.label = trace.label;
            if (window.size() >= 8) {
                auto out = fit_resonance(window);
                out.label = trace.label;
                return out;
            }
        }
    }
    const auto pre = preprocess(trace);

    // Stage on the normalized trace, then map back to the raw frame.
    auto staged = detail::stage_at_delay(pre.trace, 0.0);
    staged.params.tau = pre.tau;
    staged.params.amp *= std::abs(pre.baseline);
    staged.chi += std::arg(pre.baseline);

    const auto refined = detail::refine_full_model(trace, staged);

    FitResult out;
    out.label = trace.label;
    out.n_points = static_cast<int>(trace.size());
    out.converged = refined.converged;
    out.q_i_clamped = staged.q_i_clamped;
    out.rms_residual = refined.rms;
    out.rms_staged = refined.rms_start;
    out.params = refined.params;

    // Covariance from the internal scaled basis to
    // (f_r, q_i, q_e_mag, phi, amp, tau).
    Eigen::Matrix<double, 6, 7> T = Eigen::Matrix<double, 6, 7>::Zero();
    T(0, 0) = refined.lw;
    T(1, 1) = out.params.q_i;
    T(2, 2) = out.params.q_e_mag;
    T(3, 3) = 1.0;
    T(4, 4) = out.params.amp;
    T(5, 6) = 1.0 / (2.0 * pi * refined.span);
    out.covariance = T * refined.covariance * T.transpose();
    out.sigmas.f_r = std::sqrt(std::max(0.0, out.covariance(0, 0)));
    out.sigmas.q_i = std::sqrt(std::max(0.0, out.covariance(1, 1)));
    out.sigmas.q_e_mag = std::sqrt(std::max(0.0, out.covariance(2, 2)));
    out.sigmas.phi = std::sqrt(std::max(0.0, out.covariance(3, 3)));
    out.sigmas.amp = std::sqrt(std::max(0.0, out.covariance(4, 4)));
    out.sigmas.tau = std::sqrt(std::max(0.0, out.covariance(5, 5)));

    // sigma(Q_c) via delta method: Q_c = q_e/cos(phi).
    const double c = std::cos(out.params.phi), s = std::sin(out.params.phi);
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    g(2) = 1.0 / c;
    g(3) = out.params.q_e_mag * s / (c * c);
    out.sigmas.q_c = std::sqrt(std::max(0.0, double(g.transpose() * out.covariance * g)));
    return out;
}

} // namespace lerkit
