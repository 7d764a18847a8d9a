#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nard/numerics.hpp"
#include "nard/rng.hpp"
#include "nard/waterfill.hpp"

using namespace nard;

namespace {

/// Independent water-level solve by bisection on sum min(xi, lambda) = D.
double water_level_by_bisection(const Vector& lambda, double D) {
    double top = 0.0;
    for (double l : lambda) top = std::max(top, l);
    return bisect(
        [&](double xi) {
            double s = 0.0;
            for (double l : lambda) s += std::min(xi, l);
            return s - D;
        },
        0.0, top, 1e-14 * top, 200);
}

} // namespace

TEST_CASE("reverse_waterfill: symmetric split") {
    const auto a = reverse_waterfill({1.0, 1.0}, 1.0);
    CHECK(a.xi == Catch::Approx(0.5));
    CHECK(a.delta[0] == Catch::Approx(0.5));
    CHECK(a.delta[1] == Catch::Approx(0.5));
    CHECK(a.eta[0] == Catch::Approx(0.5));
    CHECK(a.eta[1] == Catch::Approx(0.5));
    CHECK(a.rate_nats == Catch::Approx(std::log(2.0)));
    CHECK(a.total_distortion == Catch::Approx(1.0));
}

TEST_CASE("reverse_waterfill: one dimension saturates") {
    const auto a = reverse_waterfill({4.0, 1.0}, 2.0);
    CHECK(a.xi == Catch::Approx(1.0));
    CHECK(a.delta[0] == Catch::Approx(1.0));
    CHECK(a.delta[1] == Catch::Approx(1.0));
    CHECK(a.eta[0] == Catch::Approx(0.75));
    CHECK(a.eta[1] == Catch::Approx(0.0));
    CHECK(a.rate_nats == Catch::Approx(std::log(2.0))); // (1/2) ln 4
}

TEST_CASE("reverse_waterfill: budget above the eigenvalue mass") {
    const auto a = reverse_waterfill({4.0, 1.0}, 5.0);
    CHECK(a.delta[0] == Catch::Approx(4.0));
    CHECK(a.delta[1] == Catch::Approx(1.0));
    CHECK(a.eta[0] == 0.0);
    CHECK(a.eta[1] == 0.0);
    CHECK(a.rate_nats == 0.0);
    CHECK(a.total_distortion == Catch::Approx(5.0)); // sum(lambda), not the budget
}

TEST_CASE("reverse_waterfill rejects bad domains") {
    CHECK_THROWS_AS(reverse_waterfill({1.0, 1.0}, 0.0), domain_error);
    CHECK_THROWS_AS(reverse_waterfill({1.0, 1.0}, -1.0), domain_error);
    CHECK_THROWS_AS(reverse_waterfill({1.0, 0.0}, 0.5), domain_error);
    CHECK_THROWS_AS(reverse_waterfill({1.0, -2.0}, 0.5), domain_error);
}

TEST_CASE("rate_of matches the allocation rate and flags zero delta") {
    const auto a = reverse_waterfill({4.0, 1.0}, 2.0);
    CHECK(rate_of(a) == Catch::Approx(a.rate_nats));
    WaterfillAllocation degenerate = a;
    degenerate.delta[1] = 0.0;
    CHECK_THROWS_AS(rate_of(degenerate), domain_error);

    WaterfillAllocation full = a;
    full.delta = full.lambda;
    CHECK(rate_of(full) == Catch::Approx(0.0).margin(1e-15));
    const auto b = reverse_waterfill({1.0, 1.0}, 1.0);
    CHECK(rate_of(b) == Catch::Approx(0.6931471805599453).margin(1e-12));
}

TEST_CASE("distortion_of_rate: closed form and boundaries") {
    CHECK(distortion_of_rate({4.0, 1.0}, 0.0) == Catch::Approx(5.0));
    CHECK(distortion_of_rate({1.0, 1.0}, std::log(2.0)) == Catch::Approx(1.0).margin(1e-10));
    CHECK(distortion_of_rate({4.0, 1.0}, std::log(2.0)) == Catch::Approx(2.0).margin(1e-9));
    CHECK_THROWS_AS(distortion_of_rate({1.0}, -0.1), domain_error);
}

TEST_CASE("water level agrees with the bisection oracle") {
    Rng rng(404);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t p = 1 + static_cast<std::size_t>(rng.uniform() * 8);
        Vector lambda(p);
        double sum = 0.0;
        for (double& l : lambda) {
            l = 0.1 + 9.9 * rng.uniform();
            sum += l;
        }
        const double D = sum * (0.02 + 0.95 * rng.uniform());
        const auto a = reverse_waterfill(lambda, D);
        const double xi_oracle = water_level_by_bisection(lambda, D);
        CHECK(a.xi == Catch::Approx(xi_oracle).margin(1e-9));
        double total = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            CHECK(a.delta[i] == Catch::Approx(std::min(a.xi, lambda[i])));
            CHECK(a.eta[i] >= 0.0);
            CHECK(a.eta[i] <= 1.0);
            total += a.delta[i];
        }
        CHECK(std::abs(total - D) < 1e-10);
        CHECK(a.rate_nats >= 0.0);
    }
}

TEST_CASE("roundtrip: distortion_of_rate inverts the water-fill rate") {
    Rng rng(405);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t p = 1 + static_cast<std::size_t>(rng.uniform() * 8);
        Vector lambda(p);
        double sum = 0.0;
        for (double& l : lambda) {
            l = 0.1 + 9.9 * rng.uniform();
            sum += l;
        }
        const double D = sum * (0.02 + 0.95 * rng.uniform());
        const double rate = reverse_waterfill(lambda, D).rate_nats;
        CHECK(distortion_of_rate(lambda, rate) == Catch::Approx(D).margin(1e-8));
    }
}

TEST_CASE("rate is strictly decreasing in the budget, zero past the mass") {
    const Vector lambda{3.0, 1.5, 0.4};
    const double sum = 4.9;
    double prev = std::numeric_limits<double>::infinity();
    for (double frac = 0.05; frac < 1.0; frac += 0.05) {
        const double r = reverse_waterfill(lambda, frac * sum).rate_nats;
        CHECK(r < prev);
        prev = r;
    }
    CHECK(reverse_waterfill(lambda, sum * 1.01).rate_nats == 0.0);
}

TEST_CASE("flat-region closed form matches when no dimension saturates") {
    Rng rng(406);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t p = 1 + static_cast<std::size_t>(rng.uniform() * 6);
        Vector lambda(p);
        double lmin = 1e300, logdet = 0.0;
        for (double& l : lambda) {
            l = 0.5 + 5.0 * rng.uniform();
            lmin = std::min(lmin, l);
            logdet += std::log(l);
        }
        const double D = 0.9 * lmin * static_cast<double>(p) * rng.uniform() + 1e-6;
        const auto a = reverse_waterfill(lambda, D);
        bool flat = true;
        for (double d : a.delta) flat = flat && std::abs(d - D / static_cast<double>(p)) < 1e-12;
        if (!flat) continue;
        const double closed =
            0.5 * (logdet - static_cast<double>(p) * std::log(D / static_cast<double>(p)));
        CHECK(a.rate_nats == Catch::Approx(closed).margin(1e-10));
    }
}

TEST_CASE("scaling invariance: rate depends only on ratios") {
    Rng rng(407);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t p = 1 + static_cast<std::size_t>(rng.uniform() * 5);
        Vector lambda(p), scaled(p);
        double sum = 0.0;
        const double c = 0.01 + 100.0 * rng.uniform();
        for (std::size_t i = 0; i < p; ++i) {
            lambda[i] = 0.1 + 9.9 * rng.uniform();
            scaled[i] = c * lambda[i];
            sum += lambda[i];
        }
        const double D = sum * (0.05 + 0.9 * rng.uniform());
        const auto a = reverse_waterfill(lambda, D);
        const auto b = reverse_waterfill(scaled, c * D);
        CHECK(b.rate_nats == Catch::Approx(a.rate_nats).margin(1e-9));
        for (std::size_t i = 0; i < p; ++i)
            CHECK(b.delta[i] == Catch::Approx(c * a.delta[i]).epsilon(1e-12));
    }
}
