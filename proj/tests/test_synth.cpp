#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "lerkit/io.hpp"
#include "lerkit/resfit.hpp"
#include "lerkit/segmentation.hpp"
#include "lerkit/synth.hpp"

using namespace lerkit;
using Catch::Approx;

TEST_CASE("identical spec and seed give bit-identical traces") {
    auto chip = make_paper_chip("Nb", 7);
    for (int pass = 0; pass < 2; ++pass) {
        Rng r1(stream_seed(7, 3));
        Rng r2(stream_seed(7, 3));
        NoiseSpec noise;
        const auto t1 = simulate_trace_auto(chip.resonators[3], 0.015, -96.0, SweepDirection::up,
                                            noise, r1);
        const auto t2 = simulate_trace_auto(chip.resonators[3], 0.015, -96.0, SweepDirection::up,
                                            noise, r2);
        REQUIRE(t1.freqs == t2.freqs);
        REQUIRE(t1.s21 == t2.s21);
    }
}

TEST_CASE("zero noise, a = 0, T = T_ref trace equals the bare notch model") {
    auto chip = make_paper_chip("Nb", 1);
    auto r = chip.resonators[7];
    r.e_star = 1.0;  // force a ~ 0
    Rng rng(1);
    NoiseSpec noise;
    noise.additive_sigma = 0.0;
    const auto tr = simulate_trace_auto(r, chip.t_ref_K, -120.0, SweepDirection::up, noise, rng);
    const auto op = operating_point(r, chip.t_ref_K, -120.0);
    ResonatorParams p;
    p.f_r = op.f_r;
    p.q_i = op.q_i;
    p.q_e_mag = r.q_e_mag;
    p.phi = r.phi;
    const auto model = s21_notch(tr.freqs, p);
    for (std::size_t i = 0; i < tr.size(); ++i) REQUIRE(tr.s21[i] == model[i]);
}

TEST_CASE("fitted residual matches the injected noise within 20%") {
    auto chip = make_paper_chip("Nb/Au", 5);
    Rng rng(stream_seed(5, 0));
    NoiseSpec noise;
    noise.additive_sigma = 1e-3;
    const auto tr = simulate_trace_auto(chip.resonators[7], 0.015, -96.0, SweepDirection::up,
                                        noise, rng);
    const auto fit = fit_resonance(tr);
    REQUIRE(fit.rms_residual > 0.8e-3);
    REQUIRE(fit.rms_residual < 1.2e-3);
}

TEST_CASE("temperature sweep reproduces the thermal phenomenology") {
    auto chip = make_paper_chip("Nb", 9);
    const auto& r = chip.resonators[7];
    NoiseSpec noise;
    noise.additive_sigma = 0.0;

    double prev_fr = 1e300, prev_qi = 1e300;
    double fr_at_1K = 0.0, qi_at_1K = 0.0;
    for (double T : {1.0, 2.0, 2.7, 3.4, 4.0}) {
        const auto op = operating_point(r, T, -100.0);
        if (T == 1.0) {
            fr_at_1K = op.f_r;
            qi_at_1K = op.q_i;
        }
        REQUIRE(op.f_r < prev_fr + 1.0);
        REQUIRE(op.q_i < prev_qi * 1.001);
        prev_fr = op.f_r;
        prev_qi = op.q_i;
    }
    // Above T_c/5 the dip must have moved down and broadened visibly.
    REQUIRE(prev_fr < fr_at_1K);
    REQUIRE(prev_qi < 0.5 * qi_at_1K);
}

TEST_CASE("power sweep reproduces the drive phenomenology") {
    auto chip = make_paper_chip("Nb", 11);
    const auto& r = chip.resonators[7];  // LER8

    // Q_i rises with power as the TLS bath saturates.
    const auto lo = operating_point(r, 0.015, -120.0);
    const auto mid = operating_point(r, 0.015, -70.0);
    REQUIRE(mid.q_i > lo.q_i);
    REQUIRE(mid.f_r > lo.f_r);  // TLS saturation upshift

    // At the top of the sweep the nonlinearity crosses the jump threshold.
    const auto hi = operating_point(r, 0.015, -40.0);
    REQUIRE(hi.a > bifurcation_threshold);

    NoiseSpec noise;
    noise.additive_sigma = 1e-3;
    Rng rng(2);
    const auto tr = simulate_trace_auto(r, 0.015, -40.0, SweepDirection::up, noise, rng);
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < tr.size(); ++i)
        worst = std::max(worst, std::abs(std::abs(tr.s21[i + 1]) - std::abs(tr.s21[i])));
    REQUIRE(worst > 0.05);  // sharp jump visible in |S21|
}

TEST_CASE("chip trace carries twelve detectable dips at the expected frequencies") {
    auto chip = make_paper_chip("Nb/Au", 13);
    chip.noise.additive_sigma = 5e-4;
    Rng rng(stream_seed(13, 99));
    double f_lo = 1e300, f_hi = 0.0;
    for (const auto& r : chip.resonators) {
        f_lo = std::min(f_lo, r.f_r0);
        f_hi = std::max(f_hi, r.f_r0);
    }
    const auto grid = make_grid(0.5 * (f_lo + f_hi), (f_hi - f_lo) * 1.06, 240001);
    const auto tr = simulate_chip(chip, grid, chip.t_ref_K, -96.0, rng);

    const auto dips = find_dips(tr);
    REQUIRE(dips.size() == 12);
    for (const auto& r : chip.resonators) {
        const auto op = operating_point(r, chip.t_ref_K, -96.0, chip.t_ref_K);
        const double lw = op.f_r / op.q_l;
        double best = 1e300;
        for (const auto& d : dips) best = std::min(best, std::abs(d.f_min - op.f_r));
        REQUIRE(best < 0.5 * lw);
    }

    // Dip depths follow the on-resonance notch value per resonator. The
    // sampled minimum can sit up to half a grid step off the true dip, so
    // compare window minima with a matching margin.
    for (const auto& r : chip.resonators) {
        const auto op = operating_point(r, chip.t_ref_K, -96.0, chip.t_ref_K);
        const double expected =
            std::abs(1.0 - (op.q_l / r.q_e_mag) * std::polar(1.0, r.phi));
        const double lw = op.f_r / op.q_l;
        double window_min = 1e300;
        for (std::size_t i = 0; i < tr.size(); ++i)
            if (std::abs(tr.freqs[i] - op.f_r) < 2.0 * lw)
                window_min = std::min(window_min, std::abs(tr.s21[i]));
        REQUIRE(window_min == Approx(expected).margin(0.02));
    }
}

TEST_CASE("empty chip gives a flat baseline") {
    ChipSpec chip;
    chip.seed = 1;
    chip.feedline_amp = 0.8;
    chip.noise.additive_sigma = 0.0;
    Rng rng(1);
    const auto grid = make_grid(1.6e9, 1e8, 101);
    const auto tr = simulate_chip(chip, grid, 0.015, -96.0, rng);
    for (const auto& z : tr.s21) REQUIRE(std::abs(z - cplx(0.8, 0.0)) < 1e-12);
}

TEST_CASE("resonances closer than ten linewidths are rejected") {
    auto chip = make_paper_chip("Nb", 3);
    chip.resonators[1].f_r0 = chip.resonators[0].f_r0 + 5e4;  // ~2 linewidths
    chip.resonators[1].f_sim = chip.resonators[1].f_r0 / std::sqrt(1.0 - 0.057);
    Rng rng(3);
    const auto grid = make_grid(1.7e9, 0.5e9, 1001);
    REQUIRE_THROWS_AS(simulate_chip(chip, grid, 0.015, -96.0, rng), simulation_error);
}

TEST_CASE("12 windows fit back to their generators") {
    auto chip = make_paper_chip("Nb", 21);
    chip.noise.additive_sigma = 3e-4;
    Rng rng(stream_seed(21, 7));
    double f_lo = 1e300, f_hi = 0.0;
    for (const auto& r : chip.resonators) {
        f_lo = std::min(f_lo, r.f_r0);
        f_hi = std::max(f_hi, r.f_r0);
    }
    const auto grid = make_grid(0.5 * (f_lo + f_hi), (f_hi - f_lo) * 1.06, 240001);
    const auto tr = simulate_chip(chip, grid, chip.t_ref_K, -96.0, rng);
    const auto dips = find_dips(tr);
    REQUIRE(dips.size() == 12);
    for (std::size_t k = 0; k < dips.size(); ++k) {
        const auto window = extract_window(tr, dips[k]);
        const auto fit = fit_resonance(window);
        const auto op = operating_point(chip.resonators[k], chip.t_ref_K, -96.0, chip.t_ref_K);
        REQUIRE(fit.params.f_r == Approx(op.f_r).epsilon(1e-6));
        REQUIRE(fit.params.q_i == Approx(op.q_i).epsilon(0.2));
    }
}

TEST_CASE("sweep-point generators are deterministic per seed") {
    const MBMaterial mat = MBMaterial::bcs(8.7, 0.063);
    std::vector<double> temps;
    for (int i = 0; i < 10; ++i) temps.push_back(0.1 + 0.4 * i);
    Rng r1(55), r2(55);
    const auto a = mb_sweep_points(mat, 1.75e9, temps, 0.01, r1);
    const auto b = mb_sweep_points(mat, 1.75e9, temps, 0.01, r2);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].f_r == b[i].f_r);
        REQUIRE(a[i].q_i == b[i].q_i);
    }
}
