// Minimal library walkthrough: simulate one resonance, fit it back, and
// print the recovered parameters with their uncertainties.

#include <cstdio>

#include "lerkit/lerkit.hpp"

using namespace lerkit;

int main(int argc, char** argv) {
    // Either load a measured trace (CSV: freq_hz,s21_re,s21_im) or build a
    // synthetic one from the bundled twelve-resonator chip description.
    ComplexTrace trace;
    if (argc > 1) {
        trace = ingest_trace(argv[1]);
    } else {
        const auto chip = make_paper_chip("Nb/Au", 1);
        Rng rng(stream_seed(1, 0));
        NoiseSpec noise;  // 1e-3 additive, ~60 dB SNR
        trace = simulate_trace_auto(chip.resonators[7], 0.015, -96.0, SweepDirection::up, noise,
                                    rng);
        std::printf("simulated %s at 15 mK, -96 dBm (%zu points)\n", trace.label.c_str(),
                    trace.size());
    }

    const FitResult fit = fit_resonance(trace);
    std::printf("f_r  = %.6f GHz  +- %.1f Hz\n", fit.params.f_r / 1e9, fit.sigmas.f_r);
    std::printf("Q_i  = %.4g      +- %.2g\n", fit.params.q_i, fit.sigmas.q_i);
    std::printf("Q_c  = %.4g      +- %.2g\n", fit.params.q_c(), fit.sigmas.q_c);
    std::printf("phi  = %.4f rad  +- %.4f\n", fit.params.phi, fit.sigmas.phi);
    std::printf("tau  = %.3g s\n", fit.params.tau);
    std::printf("rms residual %.2e (%s)\n", fit.rms_residual,
                fit.converged ? "converged" : "not converged");

    if (trace.power_dBm) {
        const double n = photon_number(fit.params, dbm_to_watts(*trace.power_dBm));
        std::printf("<n> = %.3g photons at %.0f dBm\n", n, *trace.power_dBm);
    }
    return 0;
}
