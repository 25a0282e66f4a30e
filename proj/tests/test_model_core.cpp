#include <catch2/catch_amalgamated.hpp>

#include "lerkit/circle_fit.hpp"
#include "lerkit/notch_model.hpp"

using namespace lerkit;
using Catch::Approx;

namespace {

ResonatorParams fig1c_params() {
    ResonatorParams p;
    p.f_r = 1.7537e9;
    p.q_i = 1.18e6;
    p.q_e_mag = 7.90e4;  // phi = 0, so Q_c = |Q_e|
    p.phi = 0.0;
    p.amp = 1.0;
    return p;
}

} // namespace

TEST_CASE("s21_notch on-resonance dip value") {
    auto p = fig1c_params();
    const double ql = 1.0 / (1.0 / p.q_i + 1.0 / p.q_e_mag);
    const auto s = s21_notch(std::vector<double>{p.f_r}, p);
    REQUIRE(s[0].real() == Approx(p.amp * (1.0 - ql / p.q_e_mag)).epsilon(1e-12));
    REQUIRE(s[0].imag() == Approx(0.0).margin(1e-12));

    // Fig-1c-style dip depth in dB, from direct arithmetic on the formula.
    const double depth_db = 20.0 * std::log10(1.0 - ql / p.q_e_mag);
    REQUIRE(20.0 * std::log10(std::abs(s[0])) == Approx(depth_db).margin(1e-9));
    REQUIRE(depth_db == Approx(-24.047).margin(0.01));
}

TEST_CASE("s21_notch far-detuned baseline") {
    auto p = fig1c_params();
    p.amp = 0.7;
    const double far = p.f_r * (1.0 + 1e6 / p.q_l());  // a million linewidths out
    const auto s = s21_notch(std::vector<double>{far}, p);
    REQUIRE(std::abs(s[0]) == Approx(p.amp).epsilon(1e-6));
}

TEST_CASE("s21_notch rejects invalid parameters by field") {
    auto p = fig1c_params();
    p.q_i = -2.0;
    try {
        s21_notch(std::vector<double>{1e9}, p);
        FAIL("expected parameter_domain_error");
    } catch (const parameter_domain_error& e) {
        REQUIRE(e.field == "q_i");
    }

    p = fig1c_params();
    p.phi = 2.0;
    try {
        s21_notch(std::vector<double>{1e9}, p);
        FAIL("expected parameter_domain_error");
    } catch (const parameter_domain_error& e) {
        REQUIRE(e.field == "phi");
    }

    p = fig1c_params();
    REQUIRE_THROWS_AS(s21_notch(std::vector<double>{-1.0}, p), parameter_domain_error);
}

TEST_CASE("loaded_q parallel combination and limits") {
    ResonatorParams p = fig1c_params();
    p.q_i = 2e5;
    p.q_e_mag = 2e5;
    REQUIRE(loaded_q(p) == Approx(1e5).epsilon(1e-12));

    p.q_i = 1e15;  // Q_i -> infinity limit
    REQUIRE(loaded_q(p) == Approx(2e5).epsilon(1e-9));

    p = fig1c_params();
    REQUIRE(loaded_q(p) == Approx(74042.938).epsilon(1e-5));
}

TEST_CASE("photon_number zero, linearity and Fig-1c magnitude") {
    auto p = fig1c_params();
    REQUIRE(photon_number(p, 0.0) == 0.0);

    const double p1 = photon_number(p, 1e-13);
    REQUIRE(photon_number(p, 2e-13) == Approx(2.0 * p1).epsilon(1e-12));

    // Independent arithmetic path evaluated in long double.
    const long double ql = 1.0L / (1.0L / 1.18e6L + 1.0L / 7.90e4L);
    const long double pw = std::pow(10.0L, (-96.0L - 30.0L) / 10.0L);
    const long double expect =
        ql * ql / (3.14159265358979323846L * 7.90e4L) * pw / (6.62607015e-34L * 1.7537e9L * 1.7537e9L);
    const double got = photon_number(p, dbm_to_watts(-96.0));
    REQUIRE(got == Approx(static_cast<double>(expect)).epsilon(1e-10));
    REQUIRE(got == Approx(2.7e6).epsilon(0.02));
}

TEST_CASE("photon_number ignores the amplitude scale") {
    auto p = fig1c_params();
    auto q = p;
    q.amp = 0.37;
    REQUIRE(photon_number(p, 1e-13) == photon_number(q, 1e-13));
}

TEST_CASE("dbm conversions") {
    REQUIRE(dbm_to_watts(0.0) == Approx(1e-3).epsilon(1e-12));
    REQUIRE(dbm_to_watts(-30.0) == Approx(1e-6).epsilon(1e-12));
    REQUIRE(dbm_to_watts(-96.0) == Approx(2.51189e-13).epsilon(1e-5));
    for (double d = -120.0; d <= 20.0; d += 7.3)
        REQUIRE(watts_to_dbm(dbm_to_watts(d)) == Approx(d).epsilon(1e-12));
}

TEST_CASE("|S21| minimum sits at f_r for phi = 0") {
    auto p = fig1c_params();
    const double lw = p.f_r / p.q_l();
    std::vector<double> f;
    for (int i = -500; i <= 500; ++i) f.push_back(p.f_r + i * lw / 50.0);
    const auto s = s21_notch(f, p);
    std::size_t arg = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (std::abs(s[i]) < std::abs(s[arg])) arg = i;
    REQUIRE(f[arg] == Approx(p.f_r).epsilon(1e-9));
}

TEST_CASE("vanishing coupling leaves the baseline") {
    auto p = fig1c_params();
    p.q_e_mag = 1e13;  // Q_l/|Q_e| -> 0
    std::vector<double> f;
    for (int i = -10; i <= 10; ++i) f.push_back(p.f_r * (1.0 + 1e-5 * i));
    for (const auto& z : s21_notch(f, p)) REQUIRE(std::abs(z - cplx(1.0, 0.0)) < 1e-6);
}

TEST_CASE("complex-plane image is a circle of diameter a Q_l/|Q_e|") {
    auto p = fig1c_params();
    p.phi = 0.21;
    p.amp = 0.83;
    const double lw = p.f_r / p.q_l();
    std::vector<double> f;
    for (int i = -1000; i <= 1000; ++i) f.push_back(p.f_r + i * lw / 100.0);
    const auto s = s21_notch(f, p);
    const auto c = circle_fit(s);
    REQUIRE(2.0 * c.radius == Approx(p.amp * p.q_l() / p.q_e_mag).epsilon(1e-9));
    REQUIRE(c.rms_residual < 1e-9 * p.amp);
}
