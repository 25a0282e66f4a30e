#pragma once

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "lerkit/errors.hpp"

namespace lerkit {

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
    constexpr double fpmin = 1e-300;
    constexpr double eps = 1e-16;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 400; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw parameter_domain_error("a", "beta parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                 b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::beta_cf(a, b, x) / a;
    return 1.0 - bt * detail::beta_cf(b, a, 1.0 - x) / b;
}

// Two-sided tail probability of Student's t with dof degrees of freedom.
inline double t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) throw parameter_domain_error("dof", "must be positive");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

// Upper critical value t with P(|T| > t) = alpha, by bisection.
inline double t_critical(double alpha, double dof) {
    double lo = 0.0, hi = 1e3;
    while (t_two_sided_p(hi, dof) > alpha) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (t_two_sided_p(mid, dof) > alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct PairedSample {
    std::vector<std::string> labels;
    std::vector<double> group_a;
    std::vector<double> group_b;

    void validate() const {
        if (labels.size() != group_a.size() || group_a.size() != group_b.size())
            throw parameter_domain_error("labels", "lengths must match");
        if (group_a.size() < 2) throw parameter_domain_error("group_a", "need at least 2 pairs");
        std::set<std::string> uniq(labels.begin(), labels.end());
        if (uniq.size() != labels.size())
            throw parameter_domain_error("labels", "must be unique");
        for (std::size_t i = 0; i < group_a.size(); ++i)
            if (!(group_a[i] > 0.0) || !(group_b[i] > 0.0))
                throw parameter_domain_error("group_a", "values must be strictly positive");
    }
};

struct TTestResult {
    double t_statistic = 0.0;
    double dof = 0.0;
    double p_value = 1.0;  // two-sided
    double mean_difference = 0.0;
    double ci95_lo = 0.0, ci95_hi = 0.0;
    bool degenerate = false;  // zero-variance differences
};

// Paired t on d_i = b_i - a_i.
inline TTestResult paired_t_test(const PairedSample& s) {
    s.validate();
    const std::size_t n = s.group_a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = s.group_b[i] - s.group_a[i];

    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1));

    TTestResult out;
    out.dof = static_cast<double>(n - 1);
    out.mean_difference = mean;
    if (sd == 0.0) {
        out.degenerate = true;
        out.t_statistic = mean == 0.0 ? 0.0
                                      : std::copysign(std::numeric_limits<double>::infinity(), mean);
        out.p_value = mean == 0.0 ? 1.0 : 0.0;
        out.ci95_lo = out.ci95_hi = mean;
        return out;
    }
    const double se = sd / std::sqrt(static_cast<double>(n));
    out.t_statistic = mean / se;
    out.p_value = t_two_sided_p(out.t_statistic, out.dof);
    const double tc = t_critical(0.05, out.dof);
    out.ci95_lo = mean - tc * se;
    out.ci95_hi = mean + tc * se;
    return out;
}

inline std::string significance_stars(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw parameter_domain_error("p", "must lie in [0,1]");
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "ns";
}

} // namespace lerkit
