#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nard/matrix.hpp"
#include "nard/numerics.hpp"
#include "nard/rng.hpp"

using namespace nard;

namespace {

Matrix random_symmetric(Rng& rng, std::size_t n, double scale = 1.0) {
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = scale * (2.0 * rng.uniform() - 1.0);
            s(i, j) = v;
            s(j, i) = v;
        }
    return s;
}

} // namespace

TEST_CASE("sym_eig handles the identity") {
    const SymEig eig = sym_eig(Matrix::identity(2));
    CHECK(eig.values[0] == Catch::Approx(1.0));
    CHECK(eig.values[1] == Catch::Approx(1.0));
    CHECK(max_abs(eig.vectors * transpose(eig.vectors) - Matrix::identity(2)) < 1e-14);
}

TEST_CASE("sym_eig keeps an already diagonal matrix, descending") {
    const SymEig eig = sym_eig(Matrix::diagonal({1.0, 3.0}));
    CHECK(eig.values[0] == Catch::Approx(3.0));
    CHECK(eig.values[1] == Catch::Approx(1.0));
    // column for eigenvalue 3 is e2, for eigenvalue 1 is e1
    CHECK(std::abs(eig.vectors(1, 0)) == Catch::Approx(1.0));
    CHECK(std::abs(eig.vectors(0, 1)) == Catch::Approx(1.0));
}

TEST_CASE("sym_eig of [[2,1],[1,2]]: roots of l^2 - 4l + 3") {
    const SymEig eig = sym_eig(Matrix{{2, 1}, {1, 2}});
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    REQUIRE(eig.values[0] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(eig.values[1] == Catch::Approx(1.0).margin(1e-12));
    // sign convention makes the largest-magnitude entry positive
    CHECK(eig.vectors(0, 0) == Catch::Approx(inv_sqrt2));
    CHECK(eig.vectors(1, 0) == Catch::Approx(inv_sqrt2));
    CHECK(std::abs(eig.vectors(0, 1)) == Catch::Approx(inv_sqrt2));
    CHECK(eig.vectors(0, 1) * eig.vectors(1, 1) < 0.0);
}

TEST_CASE("sym_eig rejects non-symmetric input and refuses with no sweeps") {
    CHECK_THROWS_AS(sym_eig(Matrix{{1, 2}, {0, 1}}), precondition_error);
    CHECK_THROWS_AS(sym_eig(Matrix{{2, 1}, {1, 2}}, 1e-12, 0), convergence_error);
}

TEST_CASE("sym_eig reconstruction and orthogonality on random matrices") {
    Rng rng(101);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 8);
        const Matrix s = random_symmetric(rng, n, 5.0);
        const SymEig eig = sym_eig(s);
        const double scale = std::max(max_abs(s), 1e-300);
        const Matrix rebuilt =
            eig.vectors * Matrix::diagonal(eig.values) * transpose(eig.vectors);
        CHECK(max_abs(rebuilt - s) <= 10 * 1e-12 * scale);
        CHECK(max_abs(transpose(eig.vectors) * eig.vectors - Matrix::identity(n)) <= 10 * 1e-12);
        double sum = 0.0;
        for (double v : eig.values) sum += v;
        CHECK(std::abs(sum - trace(s)) <=
              10 * 1e-12 * static_cast<double>(n) * std::max(scale, 1.0));
        for (std::size_t j = 0; j + 1 < n; ++j) CHECK(eig.values[j] >= eig.values[j + 1]);
    }
}

TEST_CASE("sym_eig is reproducible including signs") {
    Rng rng(7);
    const Matrix s = random_symmetric(rng, 5);
    const SymEig a = sym_eig(s);
    const SymEig b = sym_eig(s);
    CHECK(a.vectors.data == b.vectors.data);
    CHECK(a.values == b.values);
}

TEST_CASE("bisect finds simple roots") {
    CHECK(bisect([](double x) { return x - 0.5; }, 0.0, 1.0) == Catch::Approx(0.5).margin(1e-12));
    CHECK(bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0) ==
          Catch::Approx(std::sqrt(2.0)).margin(1e-11));
}

TEST_CASE("bisect solves the water-level equation by hand") {
    // sum min(xi, lambda_i) = D with lambda = (4, 1), D = 2 has xi = 1
    auto f = [](double xi) { return std::min(xi, 4.0) + std::min(xi, 1.0) - 2.0; };
    CHECK(bisect(f, 0.0, 4.0) == Catch::Approx(1.0).margin(1e-11));
}

TEST_CASE("bisect rejects a same-sign bracket and respects the iteration cap") {
    CHECK_THROWS_AS(bisect([](double x) { return x + 2.0; }, 0.0, 1.0), precondition_error);
    CHECK_THROWS_AS(bisect([](double x) { return x - 1.0 / 3.0; }, 0.0, 1.0, 1e-12, 3),
                    convergence_error);
}

TEST_CASE("bisect is invariant under strictly increasing output reparameterization") {
    auto f = [](double x) { return x * x * x - 0.7; };
    auto g = [&](double x) { return std::atan(5.0 * f(x)); }; // same sign pattern
    const double a = bisect(f, 0.0, 1.0, 1e-13);
    const double b = bisect(g, 0.0, 1.0, 1e-13);
    CHECK(a == b); // identical midpoint sequence, bit for bit
}

TEST_CASE("is_psd accepts the boundary and rejects indefinite input") {
    CHECK(is_psd(Matrix::identity(3), 1e-12));
    CHECK(is_psd(Matrix::diagonal({1.0, 0.0}), 1e-12));
    CHECK_FALSE(is_psd(Matrix{{1, 2}, {2, 1}}, 1e-12)); // eigenvalues 3 and -1
    CHECK_THROWS_AS(is_psd(Matrix{{1, 2}, {0, 1}}, 1e-12), precondition_error);
}

TEST_CASE("gaussian_sample with zero factor returns the mean exactly") {
    Rng rng(3);
    const Vector mean{1.5, -2.0};
    const Vector out = gaussian_sample(rng, mean, Matrix(2, 2));
    CHECK(out == mean);
}

TEST_CASE("gaussian_sample dimension mismatch") {
    Rng rng(3);
    CHECK_THROWS_AS(gaussian_sample(rng, Vector{0.0, 0.0}, Matrix(3, 3)), precondition_error);
}

TEST_CASE("gaussian_sample is deterministic for a fixed seed") {
    Rng a(99), b(99);
    for (int i = 0; i < 16; ++i) {
        const Vector va = gaussian_sample(a, Vector{0.0}, Matrix::identity(1));
        const Vector vb = gaussian_sample(b, Vector{0.0}, Matrix::identity(1));
        CHECK(va[0] == vb[0]);
    }
}

TEST_CASE("gaussian_sample variance matches the factor") {
    Rng rng(2024);
    const Matrix factor = Matrix::diagonal({2.0});
    double sum = 0.0, sum2 = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double x = gaussian_sample(rng, Vector{0.0}, factor)[0];
        sum += x;
        sum2 += x * x;
    }
    const double var = sum2 / n - (sum / n) * (sum / n);
    CHECK(std::abs(var - 4.0) < 0.05); // 3 sigma of the variance estimator
}

TEST_CASE("rng stream matches the reference implementation") {
    // splitmix64-seeded xoshiro256**, seed 42, first four outputs
    Rng rng(42);
    CHECK(rng.next_u64() == 0x15780b2e0c2ec716ULL);
    CHECK(rng.next_u64() == 0x6104d9866d113a7eULL);
    CHECK(rng.next_u64() == 0xae17533239e499a1ULL);
    CHECK(rng.next_u64() == 0xecb8ad4703b360a1ULL);
}

TEST_CASE("pinv_psd inverts on the range and annihilates the kernel") {
    const Matrix s{{2, 0}, {0, 0}};
    const Matrix inv = pinv_psd(s);
    CHECK(inv(0, 0) == Catch::Approx(0.5));
    CHECK(inv(1, 1) == Catch::Approx(0.0).margin(1e-15));
    Rng rng(5);
    const Matrix a = random_symmetric(rng, 4, 2.0);
    const Matrix spd = a * transpose(a) + 0.1 * Matrix::identity(4);
    CHECK(max_abs(pinv_psd(spd) * spd - Matrix::identity(4)) < 1e-10);
}

TEST_CASE("sqrt_psd squares back") {
    Rng rng(6);
    const Matrix a = random_symmetric(rng, 3, 1.0);
    const Matrix spd = a * transpose(a);
    const Matrix root = sqrt_psd(spd);
    CHECK(max_abs(root * root - spd) < 1e-12);
}
