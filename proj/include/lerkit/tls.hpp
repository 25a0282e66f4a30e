#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lerkit/constants.hpp"
#include "lerkit/errors.hpp"
#include "lerkit/levmar.hpp"

namespace lerkit {

struct TLSParams {
    double n_c = 0.0;       // critical photon number
    double beta = 0.0;      // saturation exponent
    double f_delta0 = 0.0;  // F * delta_TLS^0
    double q_i_sat = 0.0;   // high-power quality factor

    void validate() const {
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw parameter_domain_error(name, "must be positive");
        };
        pos(n_c, "n_c");
        pos(beta, "beta");
        pos(f_delta0, "f_delta0");
        pos(q_i_sat, "q_i_sat");
    }
};

// Power- and temperature-dependent TLS loss tangent:
//   tan d = F d0 * tanh(h f_r / (2 k_B T)) / (1 + n/n_c)^beta + 1/Q_i_sat
inline double tls_loss(double n, const TLSParams& p, double temperature_K, double f_r) {
    p.validate();
    if (!(n >= 0.0)) throw parameter_domain_error("n", "must be nonnegative");
    if (!(temperature_K > 0.0)) throw parameter_domain_error("T", "must be positive");
    const double th = std::tanh(planck_h * f_r / (2.0 * boltzmann_kB * temperature_K));
    return p.f_delta0 * th / std::pow(1.0 + n / p.n_c, p.beta) + 1.0 / p.q_i_sat;
}

struct TLSSweepPoint {
    double n = 0.0;    // mean photon number
    double q_i = 0.0;  // fitted internal quality factor at that power
};

struct TLSFitResult {
    TLSParams params;
    TLSParams sigmas;  // standard errors, same fields
    double f_r = 0.0;
    double temperature_K = 0.0;
    double rms_log = 0.0;  // residual rms on log(tan d)
    bool converged = false;
    bool degenerate = false;  // n_c close to the top of the measured range
    bool beta_warning = false;
    std::vector<std::string> degenerate_params;
};

// Weighted least squares of Eq-7-style loss on log(tan d) vs log n.
// Log residuals match the multiplicative noise of Q_i spanning decades.
inline TLSFitResult fit_tls_sweep(std::span<const TLSSweepPoint> points, double temperature_K,
                                  double f_r) {
    if (points.size() < 8) throw parameter_domain_error("points", "need at least 8 points");
    std::vector<TLSSweepPoint> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.n < b.n; });
    for (const auto& p : pts)
        if (!(p.n > 0.0) || !(p.q_i > 0.0))
            throw parameter_domain_error("points", "n and Q_i must be positive");
    const double n_min = pts.front().n, n_max = pts.back().n;
    if (n_max / n_min < 1e3)
        throw degenerate_fit_error("n_c", "need at least 3 decades of photon-number range");

    const double th = std::tanh(planck_h * f_r / (2.0 * boltzmann_kB * temperature_K));

    // Deterministic initial guesses from the data shape.
    const std::size_t k = pts.size();
    auto tan_of = [&](std::size_t i) { return 1.0 / pts[i].q_i; };
    double hi = 0.0;
    std::size_t hi_count = 0;
    for (std::size_t i = 0; i < k; ++i)
        if (pts[i].n >= n_max / 10.0) {
            hi += tan_of(i);
            ++hi_count;
        }
    hi /= std::max<std::size_t>(hi_count, 1);
    double lo = (tan_of(0) + tan_of(std::min<std::size_t>(1, k - 1)) +
                 tan_of(std::min<std::size_t>(2, k - 1))) /
                3.0;
    lo = std::max(lo, hi * (1.0 + 1e-3));

    const double half = 0.5 * (lo + hi);
    double n_c0 = std::sqrt(n_min * n_max);
    for (std::size_t i = 0; i + 1 < k; ++i)
        if (tan_of(i) >= half && tan_of(i + 1) < half) {
            n_c0 = std::sqrt(pts[i].n * pts[i + 1].n);
            break;
        }

    const double fd0_shape = std::max((lo - hi) / th, hi * 1e-2);

    auto model_log = [&](const Eigen::VectorXd& p, double n) {
        const double nc = std::exp(p[0]);
        const double beta = std::exp(p[1]);
        const double fd0 = std::exp(p[2]);
        const double qsat = std::exp(p[3]);
        return std::log(fd0 * th / std::pow(1.0 + n / nc, beta) + 1.0 / qsat);
    };
    auto residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(k);
        for (std::size_t i = 0; i < k; ++i) r[i] = model_log(p, pts[i].n) - std::log(tan_of(i));
        return r;
    };

    // The likelihood has a long shallow valley (saturation floor vs TLS
    // amplitude), so a single start often parks on a local shelf.
    // Multi-start across the plausible n_c/beta range and keep the best.
    LevMar lm(residuals);
    LevMarResult res;
    res.cost = 1e300;
    for (double nc0 : {n_max * 1e-4, n_max * 1e-3, n_max * 1e-2, n_max * 0.1, n_c0}) {
        for (double b0 : {0.05, 0.15, 0.5}) {
            Eigen::VectorXd p0(4);
            p0 << std::log(nc0), std::log(b0), std::log(fd0_shape), std::log(1.0 / hi);
            const auto trial = lm.minimize(p0);
            if (trial.cost < res.cost) res = trial;
        }
    }

    TLSFitResult out;
    out.f_r = f_r;
    out.temperature_K = temperature_K;
    out.params.n_c = std::exp(res.params[0]);
    out.params.beta = std::exp(res.params[1]);
    out.params.f_delta0 = std::exp(res.params[2]);
    out.params.q_i_sat = std::exp(res.params[3]);
    out.rms_log = res.rms;
    out.converged = res.converged;

    out.sigmas.n_c = out.params.n_c * std::sqrt(std::max(0.0, res.covariance(0, 0)));
    out.sigmas.beta = out.params.beta * std::sqrt(std::max(0.0, res.covariance(1, 1)));
    out.sigmas.f_delta0 = out.params.f_delta0 * std::sqrt(std::max(0.0, res.covariance(2, 2)));
    out.sigmas.q_i_sat = out.params.q_i_sat * std::sqrt(std::max(0.0, res.covariance(3, 3)));

    if (out.params.n_c >= 10.0 * n_max)
        throw degenerate_fit_error("n_c", "no saturation bend inside the measured range");
    if (out.params.n_c > n_max / 10.0) {
        out.degenerate = true;
        out.degenerate_params = {"n_c", "q_i_sat"};
    }
    out.beta_warning = out.params.beta > 1.0;
    return out;
}

struct PowerShiftPoint {
    double n = 0.0;
    double delta_fr = 0.0;  // fractional shift relative to the lowest-n point
};

inline std::vector<PowerShiftPoint> delta_fr_vs_power(std::span<const std::pair<double, double>> n_fr) {
    std::vector<std::pair<double, double>> pts(n_fr.begin(), n_fr.end());
    std::sort(pts.begin(), pts.end());
    std::vector<PowerShiftPoint> out;
    out.reserve(pts.size());
    if (pts.empty()) return out;
    const double f0 = pts.front().second;
    if (!(f0 > 0.0)) throw parameter_domain_error("f_r", "must be positive");
    for (const auto& [n, fr] : pts) {
        if (!(fr > 0.0)) throw parameter_domain_error("f_r", "must be positive");
        out.push_back({n, (fr - f0) / f0});
    }
    return out;
}

} // namespace lerkit
