#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "lerkit/constants.hpp"
#include "lerkit/errors.hpp"
#include "lerkit/levmar.hpp"
#include "lerkit/quadrature.hpp"

namespace lerkit {

inline constexpr double default_gap_ratio = 1.764;  // gap0 / (k_B T_c)

// Superconductor description entering the MB observables. sigma_n is a
// scale only; every observable uses conductivity ratios.
struct MBMaterial {
    double t_c = 0.0;      // K
    double gap0 = 0.0;     // J
    double alpha_k = 0.0;  // kinetic fraction, in (0,1)
    double sigma_n = 1.0;

    static MBMaterial bcs(double t_c, double alpha_k, double gap_ratio = default_gap_ratio) {
        return {t_c, gap_ratio * boltzmann_kB * t_c, alpha_k, 1.0};
    }

    void validate() const {
        if (!(t_c > 0.0) || !std::isfinite(t_c))
            throw parameter_domain_error("t_c", "must be positive");
        if (!(gap0 > 0.0) || !std::isfinite(gap0))
            throw parameter_domain_error("gap0", "must be positive");
        const double ratio = gap0 / (boltzmann_kB * t_c);
        if (ratio < 1.5 || ratio > 2.2)
            throw parameter_domain_error("gap0", "gap0/(k_B T_c) outside [1.5, 2.2]");
        if (!(alpha_k > 0.0 && alpha_k < 1.0))
            throw parameter_domain_error("alpha_k", "must lie in (0,1)");
        if (!(sigma_n > 0.0)) throw parameter_domain_error("sigma_n", "must be positive");
    }
};

namespace detail {

inline double fermi(double x) { return 1.0 / (std::exp(x) + 1.0); }

// f(a) - f(a+b) for a,b >= 0 without cancellation.
inline double fermi_diff(double a, double b) {
    const double ea = std::exp(-a);
    const double eab = std::exp(-a - b);
    return std::expm1(b) * eab / ((1.0 + ea) * (1.0 + eab));
}

// Reduced gap equation ln(d0/d) = 2 * Integral(0..inf) f(d cosh v / t) dv,
// in units of k_B T_c; d0 is the weak-coupling BCS ratio.
inline double reduced_gap_integral(double d, double t) {
    if (46.0 * t <= d) return 0.0;
    const double v_max = std::acosh(46.0 * t / d) + 0.5;
    return integrate([&](double v) { return fermi(d * std::cosh(v) / t); }, 0.0, v_max, 1e-13);
}

inline double solve_reduced_gap(double t) {
    const double d0 = bcs_gap_ratio;
    auto g = [&](double d) { return std::log(d0 / d) - 2.0 * reduced_gap_integral(d, t); };
    double lo = 1e-12, hi = d0 * (1.0 - 1e-12);
    if (g(hi) >= 0.0) return hi;  // low t: gap indistinguishable from d0
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Monotone cubic interpolation (Fritsch-Butland slopes) of the universal
// curve Delta(T)/Delta_0 on a uniform T/T_c grid. Built once, then shared
// read-only; the fitters call this thousands of times.
struct GapGrid {
    static constexpr int n = 512;
    std::array<double, n> y{};
    std::array<double, n> m{};

    GapGrid() {
        const double h = 1.0 / (n - 1);
        y[0] = 1.0;
        y[n - 1] = 0.0;
        for (int k = 1; k < n - 1; ++k) y[k] = solve_reduced_gap(k * h) / bcs_gap_ratio;

        std::array<double, n - 1> d{};
        for (int k = 0; k < n - 1; ++k) d[k] = (y[k + 1] - y[k]) / h;
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for (int k = 1; k < n - 1; ++k) {
            if (d[k - 1] * d[k] <= 0.0)
                m[k] = 0.0;
            else
                m[k] = 2.0 * d[k - 1] * d[k] / (d[k - 1] + d[k]);
        }
    }

    double eval(double t) const {
        if (t <= 0.0) return 1.0;
        if (t >= 1.0) return 0.0;
        const double h = 1.0 / (n - 1);
        const int k = std::min(static_cast<int>(t / h), n - 2);
        const double s = (t - k * h) / h;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        return h00 * y[k] + h * h10 * m[k] + h01 * y[k + 1] + h * h11 * m[k + 1];
    }
};

inline const GapGrid& gap_grid() {
    static const GapGrid grid;
    return grid;
}

} // namespace detail

// Universal BCS gap ratio Delta(T)/Delta_0 as a function of t = T/T_c.
inline double bcs_gap_curve(double t) { return detail::gap_grid().eval(t); }

// Full numerical solve of the reduced gap equation (no grid).
inline double bcs_gap_curve_exact(double t) {
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    return detail::solve_reduced_gap(t) / bcs_gap_ratio;
}

inline double gap_at_temperature(const MBMaterial& mat, double temperature_K, bool exact = false) {
    mat.validate();
    if (temperature_K < 0.0) throw parameter_domain_error("T", "must be nonnegative");
    const double t = temperature_K / mat.t_c;
    return mat.gap0 * (exact ? bcs_gap_curve_exact(t) : bcs_gap_curve(t));
}

struct MBSigma {
    double sigma1 = 0.0;  // units of sigma_n
    double sigma2 = 0.0;
};

// Mattis-Bardeen conductivity ratios for sub-gap photons (hf < 2 Delta).
// The integrable square-root singularities at E = Delta and at the lower
// sigma2 limit are removed exactly by cosh/cos substitutions.
inline MBSigma mb_sigma(const MBMaterial& mat, double temperature_K, double f) {
    mat.validate();
    if (!(f > 0.0)) throw parameter_domain_error("f", "must be positive");
    if (temperature_K < 0.0) throw parameter_domain_error("T", "must be nonnegative");

    const double gap = gap_at_temperature(mat, temperature_K);
    const double hf = planck_h * f;
    if (hf >= 2.0 * gap)
        throw pair_breaking_error("hf >= 2 Delta(T): pair-breaking regime outside MB validity");

    // Reduced units: energies in Delta.
    const double w = hf / gap;                                        // photon energy
    const double kt = boltzmann_kB * temperature_K / gap;             // temperature
    const double tol = 1e-10 * std::max(w, 1e-6);

    auto kernel = [&](double e) { return e * e + 1.0 + w * e; };

    MBSigma out;

    // sigma1: E = cosh(u), thermal quasiparticle term only.
    if (kt > 0.0) {
        const double e_max = 1.0 + 50.0 * kt;
        const double u_max = std::acosh(e_max);
        const double s1 = integrate(
            [&](double u) {
                const double e = std::cosh(u);
                const double df = detail::fermi_diff(e / kt, w / kt);
                return df * kernel(e) / std::sqrt((e + w) * (e + w) - 1.0);
            },
            0.0, u_max, tol);
        out.sigma1 = 2.0 / w * s1;
    }

    // sigma2 on [1-w, 1], split at the midpoint.
    const double e_lo = 1.0 - w;
    const double e_mid = 0.5 * (e_lo + 1.0);
    auto occupancy = [&](double e_plus_w) {
        return kt > 0.0 ? std::tanh(e_plus_w / (2.0 * kt)) : 1.0;
    };

    // Upper half, E = cos(theta).
    const double theta_m = std::acos(std::clamp(e_mid, -1.0, 1.0));
    const double s2_hi = integrate(
        [&](double th) {
            const double e = std::cos(th);
            return occupancy(e + w) * kernel(e) / std::sqrt((e + w) * (e + w) - 1.0);
        },
        0.0, theta_m, tol);

    // Lower half, E = cosh(v) - w.
    const double v_m = std::acosh(e_mid + w);
    const double s2_lo = integrate(
        [&](double v) {
            const double e = std::cosh(v) - w;
            return occupancy(e + w) * kernel(e) / std::sqrt(1.0 - e * e);
        },
        0.0, v_m, tol);

    out.sigma2 = (s2_hi + s2_lo) / w;
    return out;
}

struct MBObservables {
    double delta_fr = 0.0;  // (f_r(T) - f_r(T_ref))/f_r(T_ref), model value
    double q_i_inv = 0.0;
};

// Eq-style observables: delta_fr = (alpha/2) * fractional change of sigma2
// relative to the lowest sweep temperature, Q_i^-1 = alpha * sigma1/sigma2.
inline MBObservables mb_observables(const MBMaterial& mat, double temperature_K, double f_r0,
                                    double t_ref_K) {
    mat.validate();
    if (temperature_K < 0.0 || temperature_K > 0.9 * mat.t_c)
        throw parameter_domain_error("T", "must lie in [0, 0.9 T_c]");
    const auto s = mb_sigma(mat, temperature_K, f_r0);
    const auto s_ref = mb_sigma(mat, t_ref_K, f_r0);
    MBObservables out;
    out.delta_fr = 0.5 * mat.alpha_k * (s.sigma2 - s_ref.sigma2) / s_ref.sigma2;
    out.q_i_inv = mat.alpha_k * s.sigma1 / s.sigma2;
    return out;
}

struct MBSweepPoint {
    double temperature_K = 0.0;
    double f_r = 0.0;
    double q_i = 0.0;
};

struct MBSweepFit {
    double alpha_k = 0.0, alpha_k_sigma = 0.0;
    double t_c = 0.0, t_c_sigma = 0.0;
    double loss_floor = 0.0;  // fitted T-independent Q_i^-1 offset
    double rms = 0.0;
    int n_used = 0;
    bool converged = false;
};

struct MBSweepOptions {
    double gap_ratio = default_gap_ratio;
    bool include_low_t = false;  // keep points below the TLS saturation scale hf/(2 k_B)
    // Measured Q_i^-1 carries residual (TLS/package) loss on top of the MB
    // term; a nonnegative nuisance floor keeps alpha_k unbiased on such
    // data and fits ~0 on floor-free sweeps.
    bool fit_loss_floor = true;
};

// Joint least squares of (delta_fr, Q_i^-1) over (alpha_k, T_c). Points
// below T = h f/(2 k_B) are TLS-dominated and excluded by default.
inline MBSweepFit fit_mb_sweep(std::span<const MBSweepPoint> points, double f_r0,
                               MBSweepOptions opts = {}) {
    if (points.size() < 6)
        throw parameter_domain_error("points", "need at least 6 temperature points");
    if (!(f_r0 > 0.0)) throw parameter_domain_error("f_r0", "must be positive");

    const double t_bath = planck_h * f_r0 / (2.0 * boltzmann_kB);
    double t_ref = points[0].temperature_K;
    for (const auto& p : points) t_ref = std::min(t_ref, p.temperature_K);

    std::vector<double> ts, dfr, qinv;
    double t_max = 0.0;
    for (const auto& p : points) {
        if (!(p.temperature_K > 0.0) || !(p.f_r > 0.0) || !(p.q_i > 0.0))
            throw parameter_domain_error("points", "temperatures, f_r and Q_i must be positive");
        t_max = std::max(t_max, p.temperature_K);
        if (!opts.include_low_t && p.temperature_K < t_bath) continue;
        ts.push_back(p.temperature_K);
        dfr.push_back((p.f_r - f_r0) / f_r0);
        qinv.push_back(1.0 / p.q_i);
    }
    if (ts.size() < 4)
        throw degenerate_fit_error("t_c", "too few usable points after low-T exclusion");

    // Per-point scales for relative residuals (measurement noise on these
    // observables is multiplicative); the floor keeps near-zero points
    // from dominating.
    double dfr_max = 1e-12, qinv_max = 1e-30;
    for (double v : dfr) dfr_max = std::max(dfr_max, std::abs(v));
    for (double v : qinv) qinv_max = std::max(qinv_max, v);
    std::vector<double> sf(ts.size()), sq(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        sf[i] = std::abs(dfr[i]) + 0.01 * dfr_max;
        sq[i] = std::abs(qinv[i]) + 0.01 * qinv_max;
    }

    // The model is linear in alpha_k at fixed T_c, so seed with a coarse
    // T_c grid and the closed-form alpha for each candidate.
    auto model_shapes = [&](double t_c) {
        MBMaterial m = MBMaterial::bcs(t_c, 0.5, opts.gap_ratio);
        const auto s_ref = mb_sigma(m, t_ref, f_r0);
        std::vector<double> gf(ts.size()), gq(ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const auto s = mb_sigma(m, ts[i], f_r0);
            gf[i] = 0.5 * (s.sigma2 - s_ref.sigma2) / s_ref.sigma2;
            gq[i] = s.sigma1 / s.sigma2;
        }
        return std::pair{gf, gq};
    };

    const bool with_floor = opts.fit_loss_floor;
    const double qinv_tiny = 1e-8 * qinv_max;

    // The model is linear in (alpha_k, floor) at fixed T_c, so seed with a
    // coarse T_c grid and the closed-form linear solution per candidate.
    const double t_c_floor = t_max / 0.9;
    double best_tc = t_c_floor * 1.5, best_alpha = 0.05, best_qf = qinv_tiny, best_cost = 1e300;
    for (double factor : {1.05, 1.2, 1.4, 1.7, 2.1, 2.6, 3.2, 4.0, 5.0}) {
        const double t_c = t_c_floor * factor;
        const auto [gf, gq] = model_shapes(t_c);
        double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const double wq = 1.0 / (sq[i] * sq[i]);
            const double wf = 1.0 / (sf[i] * sf[i]);
            a11 += wq * gq[i] * gq[i] + wf * gf[i] * gf[i];
            a12 += wq * gq[i];
            a22 += wq;
            b1 += wq * gq[i] * qinv[i] + wf * gf[i] * dfr[i];
            b2 += wq * qinv[i];
        }
        double alpha, qf;
        const double det = a11 * a22 - a12 * a12;
        if (with_floor && std::abs(det) > 1e-300) {
            alpha = (b1 * a22 - b2 * a12) / det;
            qf = (a11 * b2 - a12 * b1) / det;
        } else {
            alpha = b1 / std::max(a11, 1e-300);
            qf = 0.0;
        }
        if (qf < 0.0) {
            qf = 0.0;
            alpha = b1 / std::max(a11, 1e-300);
        }
        alpha = std::clamp(alpha, 1e-4, 0.999);
        double cost = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const double rf = (alpha * gf[i] - dfr[i]) / sf[i];
            const double rq = (alpha * gq[i] + qf - qinv[i]) / sq[i];
            cost += rf * rf + rq * rq;
        }
        if (cost < best_cost) {
            best_cost = cost;
            best_tc = t_c;
            best_alpha = alpha;
            best_qf = std::max(qf, qinv_tiny);
        }
    }

    // p = (ln alpha, ln(T_c - floor) [, ln loss_floor]).
    const int n_par = with_floor ? 3 : 2;
    auto residuals = [&](const Eigen::VectorXd& p) {
        const double alpha = std::exp(p[0]);
        const double t_c = t_c_floor + std::exp(p[1]);
        const double qf = with_floor ? std::exp(p[2]) : 0.0;
        const auto [gf, gq] = model_shapes(t_c);
        Eigen::VectorXd r(2 * ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) {
            r[2 * i] = (alpha * gf[i] - dfr[i]) / sf[i];
            r[2 * i + 1] = (alpha * gq[i] + qf - qinv[i]) / sq[i];
        }
        return r;
    };

    Eigen::VectorXd p0(n_par);
    p0[0] = std::log(best_alpha);
    p0[1] = std::log(std::max(best_tc - t_c_floor, 1e-3));
    if (with_floor) p0[2] = std::log(best_qf);
    LevMar lm(residuals);
    const auto res = lm.minimize(p0);

    MBSweepFit out;
    out.alpha_k = std::exp(res.params[0]);
    out.t_c = t_c_floor + std::exp(res.params[1]);
    out.loss_floor = with_floor ? std::exp(res.params[2]) : 0.0;
    out.rms = res.rms;
    out.n_used = static_cast<int>(ts.size());
    out.converged = res.converged;
    out.alpha_k_sigma = out.alpha_k * std::sqrt(std::max(0.0, res.covariance(0, 0)));
    out.t_c_sigma = (out.t_c - t_c_floor) * std::sqrt(std::max(0.0, res.covariance(1, 1)));

    if (t_max < out.t_c / 4.0)
        throw degenerate_fit_error("t_c", "sweep does not span T_c/4");
    return out;
}

// Kinetic-inductance bookkeeping from measured vs simulated frequencies.
struct KineticExtraction {
    double l_k = 0.0;      // H/sq
    double l_g = 0.0;      // H/sq
    double alpha_k = 0.0;  // l_k / (l_g + l_k)
    double f_sim = 0.0;    // Hz
    double f_meas = 0.0;   // Hz
};

inline KineticExtraction extract_kinetic(double f_sim, double f_meas, double l_g) {
    if (!(f_meas > 0.0) || !(f_sim > 0.0))
        throw parameter_domain_error("f_meas", "frequencies must be positive");
    if (f_meas > f_sim)
        throw parameter_domain_error("f_meas",
                                     "exceeds f_sim: kinetic inductance can only lower f_r");
    if (!(l_g > 0.0)) throw parameter_domain_error("l_g", "must be positive");
    const double ratio = f_sim / f_meas;
    KineticExtraction out;
    out.l_g = l_g;
    out.l_k = (ratio * ratio - 1.0) * l_g;
    out.alpha_k = out.l_k / (l_g + out.l_k);
    out.f_sim = f_sim;
    out.f_meas = f_meas;
    return out;
}

struct KineticAggregate {
    double l_k_mean = 0.0, l_k_std = 0.0;
    double alpha_k_mean = 0.0, alpha_k_std = 0.0;
};

inline KineticAggregate aggregate_kinetics(std::span<const KineticExtraction> xs) {
    if (xs.size() < 2) throw parameter_domain_error("extractions", "need at least 2");
    KineticAggregate out;
    for (const auto& x : xs) {
        out.l_k_mean += x.l_k;
        out.alpha_k_mean += x.alpha_k;
    }
    out.l_k_mean /= xs.size();
    out.alpha_k_mean /= xs.size();
    double sl = 0.0, sa = 0.0;
    for (const auto& x : xs) {
        sl += (x.l_k - out.l_k_mean) * (x.l_k - out.l_k_mean);
        sa += (x.alpha_k - out.alpha_k_mean) * (x.alpha_k - out.alpha_k_mean);
    }
    out.l_k_std = std::sqrt(sl / (xs.size() - 1));
    out.alpha_k_std = std::sqrt(sa / (xs.size() - 1));
    return out;
}

} // namespace lerkit
