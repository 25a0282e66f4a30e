#include <catch2/catch_amalgamated.hpp>

#include "lerkit/rng.hpp"
#include "lerkit/stats.hpp"
#include "oracles.hpp"

using namespace lerkit;
using Catch::Approx;

TEST_CASE("textbook pairs against the quadrature oracle") {
    PairedSample s;
    s.labels = {"p1", "p2", "p3", "p4", "p5"};
    s.group_a = {1, 2, 3, 4, 5};
    s.group_b = {2, 3, 4, 5, 7};
    const auto r = paired_t_test(s);
    REQUIRE(r.t_statistic == Approx(6.0).epsilon(1e-12));
    REQUIRE(r.dof == 4.0);
    REQUIRE(std::abs(r.p_value - oracle::t_two_sided_p(6.0, 4.0)) < 1e-10);
    REQUIRE_FALSE(r.degenerate);
    REQUIRE(r.ci95_lo < r.mean_difference);
    REQUIRE(r.ci95_hi > r.mean_difference);
}

TEST_CASE("identical groups are degenerate with p = 1") {
    PairedSample s;
    s.labels = {"a", "b", "c"};
    s.group_a = {1.0, 2.0, 3.0};
    s.group_b = {1.0, 2.0, 3.0};
    const auto r = paired_t_test(s);
    REQUIRE(r.t_statistic == 0.0);
    REQUIRE(r.p_value == 1.0);
    REQUIRE(r.degenerate);
}

TEST_CASE("p-values match the oracle on random datasets to 1e-8") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform() * 15);
        PairedSample s;
        for (std::size_t i = 0; i < n; ++i) {
            s.labels.push_back("d" + std::to_string(i));
            s.group_a.push_back(1e5 * (1.0 + 0.3 * rng.uniform()));
            s.group_b.push_back(s.group_a.back() * (1.0 + 0.2 * rng.gaussian()) + 1.0);
        }
        for (auto& v : s.group_b) v = std::max(v, 1.0);
        const auto r = paired_t_test(s);
        if (r.degenerate) continue;
        REQUIRE(std::abs(r.p_value - oracle::t_two_sided_p(r.t_statistic, r.dof)) < 1e-8);
    }
}

TEST_CASE("swapping groups negates t and preserves p") {
    PairedSample s;
    s.labels = {"a", "b", "c", "d"};
    s.group_a = {10.0, 12.0, 9.0, 14.0};
    s.group_b = {13.0, 15.0, 9.5, 16.0};
    const auto r1 = paired_t_test(s);
    std::swap(s.group_a, s.group_b);
    const auto r2 = paired_t_test(s);
    REQUIRE(r2.t_statistic == Approx(-r1.t_statistic).epsilon(1e-14));
    REQUIRE(r2.p_value == Approx(r1.p_value).epsilon(1e-14));
}

TEST_CASE("adding a constant to every pair leaves t and p unchanged") {
    PairedSample s;
    s.labels = {"a", "b", "c", "d", "e"};
    s.group_a = {10.0, 12.0, 9.0, 14.0, 11.0};
    s.group_b = {13.0, 15.0, 9.5, 16.0, 12.5};
    const auto r1 = paired_t_test(s);
    for (auto& v : s.group_a) v += 100.0;
    for (auto& v : s.group_b) v += 100.0;
    const auto r2 = paired_t_test(s);
    REQUIRE(r2.t_statistic == Approx(r1.t_statistic).epsilon(1e-10));
    REQUIRE(r2.p_value == Approx(r1.p_value).epsilon(1e-10));
}

TEST_CASE("p decreases monotonically in |t|") {
    double prev = 1.0;
    for (double t = 0.0; t <= 12.0; t += 0.25) {
        const double p = t_two_sided_p(t, 11.0);
        REQUIRE(p <= prev + 1e-15);
        prev = p;
    }
}

TEST_CASE("synthetic 12-pair sample with uniformly higher group lands in ***") {
    Rng rng(7);
    PairedSample s;
    for (int i = 1; i <= 12; ++i) {
        s.labels.push_back("LER" + std::to_string(i));
        const double qa = 3e5 * (1.0 + 0.25 * rng.gaussian());
        s.group_a.push_back(std::max(qa, 5e4));
        s.group_b.push_back(s.group_a.back() * (1.9 + 0.25 * rng.uniform()));
    }
    const auto r = paired_t_test(s);
    REQUIRE(r.p_value < 0.001);
    REQUIRE(significance_stars(r.p_value) == "***");
}

TEST_CASE("significance star thresholds") {
    REQUIRE(significance_stars(0.0002) == "***");
    REQUIRE(significance_stars(0.005) == "**");
    REQUIRE(significance_stars(0.04) == "*");
    REQUIRE(significance_stars(0.5) == "ns");
    REQUIRE(significance_stars(0.001) == "**");  // boundary is strict
    REQUIRE_THROWS_AS(significance_stars(1.5), parameter_domain_error);
}

TEST_CASE("sample validation") {
    PairedSample s;
    s.labels = {"a", "a"};
    s.group_a = {1.0, 2.0};
    s.group_b = {1.0, 2.0};
    REQUIRE_THROWS_AS(paired_t_test(s), parameter_domain_error);  // duplicate labels
    s.labels = {"a"};
    s.group_a = {1.0};
    s.group_b = {1.0};
    REQUIRE_THROWS_AS(paired_t_test(s), parameter_domain_error);  // too short
}
