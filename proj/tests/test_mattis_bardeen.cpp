#include <catch2/catch_amalgamated.hpp>

#include "lerkit/mattis_bardeen.hpp"
#include "lerkit/rng.hpp"
#include "lerkit/synth.hpp"
#include "oracles.hpp"

using namespace lerkit;
using Catch::Approx;

namespace {
const MBMaterial nb = MBMaterial::bcs(8.7, 0.063);
const MBMaterial nbau = MBMaterial::bcs(7.3, 0.103);
} // namespace

TEST_CASE("gap boundary values") {
    REQUIRE(gap_at_temperature(nb, 0.0) == Approx(nb.gap0).epsilon(1e-12));
    REQUIRE(gap_at_temperature(nb, nb.t_c) == 0.0);
    REQUIRE(gap_at_temperature(nb, 2.0 * nb.t_c) == 0.0);
}

TEST_CASE("gap at T_c/2 matches the dense-grid oracle near 0.95") {
    const double ratio = gap_at_temperature(nb, nb.t_c / 2.0) / nb.gap0;
    REQUIRE(ratio == Approx(0.95).margin(0.01));
    REQUIRE(ratio == Approx(oracle::gap_ratio_dense(0.5)).margin(2e-3));
}

TEST_CASE("gap curve matches the independent cutoff-form solver") {
    for (double t : {0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 0.97})
        REQUIRE(bcs_gap_curve(t) == Approx(oracle::gap_ratio_dense(t)).margin(2e-3));
}

TEST_CASE("gap curve is monotone nonincreasing and matches the exact solve") {
    double prev = 1.0 + 1e-15;
    for (int k = 0; k <= 400; ++k) {
        const double t = k / 400.0;
        const double v = bcs_gap_curve(t);
        REQUIRE(v <= prev + 1e-12);
        prev = v;
    }
    for (double t : {0.21, 0.47, 0.73, 0.935})
        REQUIRE(bcs_gap_curve(t) == Approx(bcs_gap_curve_exact(t)).epsilon(1e-6));
}

TEST_CASE("gap curve stays within 2% of the tanh interpolant") {
    for (int k = 0; k <= 78; ++k) {
        const double t = 0.2 + (0.98 - 0.2) * k / 78.0;
        const double tanh_i = std::tanh(1.74 * std::sqrt(1.0 / t - 1.0));
        REQUIRE(std::abs(bcs_gap_curve(t) - tanh_i) / bcs_gap_curve(t) < 0.02);
    }
}

TEST_CASE("sigma2 zero-temperature limit") {
    const double f = 1.7537e9;
    const auto s = mb_sigma(nb, 0.01 * nb.t_c, f);
    REQUIRE(s.sigma2 == Approx(pi * nb.gap0 / (planck_h * f)).epsilon(0.01));
    REQUIRE(s.sigma1 < 1e-30);
}

TEST_CASE("sigma2 decreases monotonically with temperature") {
    const double f = 1.7537e9;
    double prev = 1e300;
    for (int k = 1; k <= 18; ++k) {
        const double t = 0.05 * k * nb.t_c;
        const auto s = mb_sigma(nb, t, f);
        REQUIRE(s.sigma2 < prev);
        prev = s.sigma2;
    }
}

TEST_CASE("dissipation onset near T_c/5") {
    const double f = 1.7537e9;
    const auto s5 = mb_sigma(nb, nb.t_c / 5.0, f);
    const auto s10 = mb_sigma(nb, nb.t_c / 10.0, f);
    REQUIRE(nb.alpha_k * s5.sigma1 / s5.sigma2 > 10.0 * nb.alpha_k * s10.sigma1 / s10.sigma2);
}

TEST_CASE("sigma ratios agree with the low-T analytic asymptotics within 1%") {
    const double f = 1.7537e9;
    const double T = nb.t_c / 10.0;
    const double gap = gap_at_temperature(nb, T);
    const double hf = planck_h * f;
    const double kt = boltzmann_kB * T;
    const double x = hf / (2.0 * kt);
    const auto s = mb_sigma(nb, T, f);
    const double sigma1_asym =
        4.0 * gap / hf * std::exp(-gap / kt) * std::sinh(x) * std::cyl_bessel_k(0, x);
    const double sigma2_asym = pi * gap / hf * std::tanh(gap / (2.0 * kt));
    REQUIRE(s.sigma1 == Approx(sigma1_asym).epsilon(0.01));
    REQUIRE(s.sigma2 == Approx(sigma2_asym).epsilon(0.01));
}

TEST_CASE("pair-breaking photons are rejected") {
    const double T = 0.85 * nb.t_c;
    const double gap = gap_at_temperature(nb, T);
    const double f_bad = 2.2 * gap / planck_h;
    REQUIRE_THROWS_AS(mb_sigma(nb, T, f_bad), pair_breaking_error);
}

TEST_CASE("observables vanish at the reference temperature") {
    const auto obs = mb_observables(nb, 0.015, 1.7537e9, 0.015);
    REQUIRE(obs.delta_fr == 0.0);
}

TEST_CASE("frequency shift is negative and decreasing above T_c/5") {
    double prev = 0.0;
    for (double t = nb.t_c / 5.0; t <= 0.5 * nb.t_c; t += 0.05 * nb.t_c) {
        const auto obs = mb_observables(nb, t, 1.7537e9, 0.015);
        REQUIRE(obs.delta_fr <= 0.0);
        REQUIRE(obs.delta_fr < prev);
        prev = obs.delta_fr;
    }
}

TEST_CASE("Q_i^-1 is linear in alpha_k") {
    MBMaterial m2 = nb;
    m2.alpha_k = 2.0 * nb.alpha_k;
    const auto o1 = mb_observables(nb, 2.5, 1.7537e9, 0.015);
    const auto o2 = mb_observables(m2, 2.5, 1.7537e9, 0.015);
    REQUIRE(o2.q_i_inv == Approx(2.0 * o1.q_i_inv).epsilon(1e-12));
}

TEST_CASE("Q_i^-1 nonnegative and increasing above T_c/4") {
    double prev = -1.0;
    for (double t = nb.t_c / 4.0; t <= 0.6 * nb.t_c; t += 0.03 * nb.t_c) {
        const auto obs = mb_observables(nb, t, 1.7537e9, 0.015);
        REQUIRE(obs.q_i_inv >= 0.0);
        REQUIRE(obs.q_i_inv > prev);
        prev = obs.q_i_inv;
    }
}

TEST_CASE("observables are independent of the sigma_n scale") {
    MBMaterial scaled = nb;
    scaled.sigma_n = 37.0;
    const auto o1 = mb_observables(nb, 2.0, 1.7537e9, 0.015);
    const auto o2 = mb_observables(scaled, 2.0, 1.7537e9, 0.015);
    REQUIRE(o1.delta_fr == o2.delta_fr);
    REQUIRE(o1.q_i_inv == o2.q_i_inv);
}

TEST_CASE("observable domain ends at 0.9 T_c") {
    REQUIRE_THROWS_AS(mb_observables(nb, 0.95 * nb.t_c, 1.7537e9, 0.015),
                      parameter_domain_error);
}

TEST_CASE("fit_mb_sweep reproduces exact model data to high accuracy") {
    std::vector<double> temps;
    for (int i = 0; i < 30; ++i) temps.push_back(0.015 + (4.0 - 0.015) * i / 29.0);
    std::vector<MBSweepPoint> pts;
    const double f_r0 = 1.7537e9;
    for (double t : temps) {
        const auto obs = mb_observables(nb, t, f_r0, temps.front());
        pts.push_back({t, f_r0 * (1.0 + obs.delta_fr), 1.0 / std::max(obs.q_i_inv, 1e-300)});
    }
    const auto fit = fit_mb_sweep(pts, f_r0);
    REQUIRE(fit.alpha_k == Approx(nb.alpha_k).epsilon(1e-6));
    REQUIRE(fit.t_c == Approx(nb.t_c).epsilon(1e-6));
    REQUIRE(fit.rms < 1e-8);
}

TEST_CASE("fit_mb_sweep recovers both materials at 1% noise") {
    std::vector<double> temps;
    for (int i = 0; i < 30; ++i) temps.push_back(0.015 + (4.0 - 0.015) * i / 29.0);
    for (const auto& mat : {nb, nbau}) {
        Rng rng(mat.t_c < 8.0 ? 101 : 202);
        const double f_r0 = mat.t_c < 8.0 ? 1.7537e9 : 1.797254e9;
        const auto pts = mb_sweep_points(mat, f_r0, temps, 0.01, rng);
        const auto fit = fit_mb_sweep(pts, f_r0);
        REQUIRE(fit.alpha_k == Approx(mat.alpha_k).epsilon(0.02));
        REQUIRE(fit.t_c == Approx(mat.t_c).epsilon(0.01));
    }
}

TEST_CASE("fit_mb_sweep rejects sweeps that are too small or too shallow") {
    std::vector<MBSweepPoint> few = {{0.1, 1e9, 1e6}, {0.2, 1e9, 1e6}, {0.3, 1e9, 1e6}};
    REQUIRE_THROWS_AS(fit_mb_sweep(few, 1e9), parameter_domain_error);
}

TEST_CASE("extract_kinetic basics") {
    const auto k0 = extract_kinetic(1.6e9, 1.6e9, 2.0e-12);
    REQUIRE(k0.l_k == 0.0);
    REQUIRE(k0.alpha_k == 0.0);

    const auto k1 = extract_kinetic(std::sqrt(2.0) * 1.6e9, 1.6e9, 2.0e-12);
    REQUIRE(k1.l_k == Approx(2.0e-12).epsilon(1e-12));
    REQUIRE(k1.alpha_k == Approx(0.5).epsilon(1e-12));

    REQUIRE_THROWS_AS(extract_kinetic(1.5e9, 1.6e9, 2.0e-12), parameter_domain_error);
}

TEST_CASE("paper mean values are internally consistent") {
    // L_k = 0.13 pH/sq with alpha_k = 0.057 implies L_g ~ 2.15 pH/sq.
    const double l_k = 0.13e-12, alpha = 0.057;
    const double l_g = l_k * (1.0 - alpha) / alpha;
    REQUIRE(l_g == Approx(2.1506e-12).epsilon(1e-3));
    const double f_meas = 1.7537e9;
    const double f_sim = f_meas / std::sqrt(1.0 - alpha);
    const auto k = extract_kinetic(f_sim, f_meas, l_g);
    REQUIRE(k.alpha_k == Approx(alpha).epsilon(1e-10));
    REQUIRE(k.l_k == Approx(l_k).epsilon(1e-3));
}

TEST_CASE("kinetic extraction round-trips randomized inputs") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double l_g = 1e-12 * (0.5 + 4.0 * rng.uniform());
        const double l_k = 1e-13 * (0.1 + 5.0 * rng.uniform());
        const double f_sim = 1e9 * (1.0 + rng.uniform());
        const double f_meas = f_sim / std::sqrt(1.0 + l_k / l_g);
        const auto k = extract_kinetic(f_sim, f_meas, l_g);
        REQUIRE(k.l_k == Approx(l_k).epsilon(1e-12));
    }
}

TEST_CASE("aggregate_kinetics mean and sample std") {
    std::vector<KineticExtraction> xs(3);
    xs[0].l_k = 0.12e-12;
    xs[1].l_k = 0.13e-12;
    xs[2].l_k = 0.14e-12;
    for (auto& x : xs) x.alpha_k = 0.057;
    const auto agg = aggregate_kinetics(xs);
    REQUIRE(agg.l_k_mean == Approx(0.13e-12).epsilon(1e-12));
    REQUIRE(agg.l_k_std == Approx(0.01e-12).epsilon(1e-10));
    REQUIRE(agg.alpha_k_std == 0.0);

    REQUIRE_THROWS_AS(aggregate_kinetics(std::vector<KineticExtraction>(1)),
                      parameter_domain_error);
}

TEST_CASE("material validation") {
    MBMaterial bad = nb;
    bad.gap0 = 3.0 * boltzmann_kB * bad.t_c;  // ratio outside [1.5, 2.2]
    REQUIRE_THROWS_AS(bad.validate(), parameter_domain_error);
    bad = nb;
    bad.alpha_k = 1.5;
    REQUIRE_THROWS_AS(bad.validate(), parameter_domain_error);
}
