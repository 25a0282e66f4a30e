#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "lerkit/errors.hpp"
#include "lerkit/types.hpp"

namespace lerkit {

struct CircleFit {
    cplx center;
    double radius = 0.0;
    double rms_residual = 0.0;  // rms of |point - center| - radius
};

// Taubin algebraic circle fit (Newton on the characteristic polynomial).
// Near-unbiased on arcs, which matters for shallow resonances.
inline CircleFit circle_fit(std::span<const cplx> points) {
    const std::size_t n = points.size();
    if (n < 8) throw geometry_error("circle fit needs at least 8 points");

    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p.real();
        my += p.imag();
    }
    mx /= n;
    my /= n;

    double muu = 0, mvv = 0, muv = 0, muz = 0, mvz = 0, mzz = 0;
    for (const auto& p : points) {
        const double u = p.real() - mx;
        const double v = p.imag() - my;
        const double z = u * u + v * v;
        muu += u * u;
        mvv += v * v;
        muv += u * v;
        muz += u * z;
        mvz += v * z;
        mzz += z * z;
    }
    muu /= n;
    mvv /= n;
    muv /= n;
    muz /= n;
    mvz /= n;
    mzz /= n;

    const double mz = muu + mvv;
    // Collinearity check on the point scatter.
    const double disc = std::sqrt((muu - mvv) * (muu - mvv) + 4.0 * muv * muv);
    const double eig_min = 0.5 * (mz - disc);
    const double eig_max = 0.5 * (mz + disc);
    if (eig_max <= 0.0 || eig_min <= 1e-12 * eig_max)
        throw geometry_error("points are collinear or coincident");

    const double cov_xy = muu * mvv - muv * muv;
    const double var_z = mzz - mz * mz;
    const double a3 = 4.0 * mz;
    const double a2 = -3.0 * mz * mz - mzz;
    const double a1 = var_z * mz + 4.0 * cov_xy * mz - muz * muz - mvz * mvz;
    const double a0 =
        muz * (muz * mvv - mvz * muv) + mvz * (mvz * muu - muz * muv) - var_z * cov_xy;

    double x = 0.0, y = a0;
    for (int iter = 0; iter < 99; ++iter) {
        const double dy = a1 + x * (2.0 * a2 + 3.0 * a3 * x);
        const double x_new = x - y / dy;
        if (!std::isfinite(x_new) || x_new == x) break;
        const double y_new = a0 + x_new * (a1 + x_new * (a2 + x_new * a3));
        if (std::abs(y_new) >= std::abs(y)) break;
        x = x_new;
        y = y_new;
    }

    const double det = x * x - x * mz + cov_xy;
    if (!std::isfinite(det) || std::abs(det) < 1e-30)
        throw geometry_error("degenerate circle fit");
    const double xc = (muz * (mvv - x) - mvz * muv) / det / 2.0;
    const double yc = (mvz * (muu - x) - muz * muv) / det / 2.0;
    const double radius = std::sqrt(xc * xc + yc * yc + mz);

    CircleFit out;
    out.center = cplx(xc + mx, yc + my);
    out.radius = radius;
    if (!std::isfinite(radius) || radius <= 0.0)
        throw geometry_error("degenerate circle fit");

    double ss = 0.0;
    for (const auto& p : points) {
        const double d = std::abs(p - out.center) - radius;
        ss += d * d;
    }
    out.rms_residual = std::sqrt(ss / n);
    return out;
}

} // namespace lerkit
