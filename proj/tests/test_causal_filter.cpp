#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nard/causal_filter.hpp"
#include "nard/rd_curve.hpp"

using namespace nard;

namespace {

GaussMarkovSource scalar_source(double a, double b, double c, double n, double x0_var = 0.0) {
    return GaussMarkovSource{Matrix{{a}}, Matrix{{b}}, Matrix{{c}}, Matrix{{n}}, Vector{0.0},
                             Matrix{{x0_var}}};
}

/// Independent scalar oracle: the coupled recursion written out by hand for
/// m = p = 1, iterated to its fixed point.
struct ScalarFixedPoint {
    double sigma, lambda, eta, rate, power;
};

ScalarFixedPoint scalar_oracle(double a, double b, double c, double n, double d, double q) {
    double sigma = 0.0;
    for (int it = 0; it < 10000; ++it) {
        const double lam = c * c * sigma + n * n;
        double next;
        if (d >= lam) {
            next = a * a * sigma + b * b;
        } else {
            const double eta = 1.0 - d / lam;
            // M = eta^2 lam + eta * d, gain cancels one factor of eta
            const double m = eta * eta * lam + eta * d;
            const double chat = eta * c;
            next = a * a * sigma - (a * sigma * chat) * (a * sigma * chat) / m + b * b;
        }
        if (std::abs(next - sigma) < 1e-15) {
            sigma = next;
            break;
        }
        sigma = next;
    }
    const double lam = c * c * sigma + n * n;
    const double eta = d < lam ? 1.0 - d / lam : 0.0;
    const double rate = d < lam ? 0.5 * std::log(lam / d) : 0.0;
    const double power = d < lam ? q * eta * lam / d : 0.0;
    return {sigma, lam, eta, rate, power};
}

GaussMarkovSource random_stable_source(Rng& rng, std::size_t m, std::size_t p) {
    GaussMarkovSource src;
    src.A = Matrix(m, m);
    for (double& v : src.A.data) v = 2.0 * rng.uniform() - 1.0;
    double radius = 0.0;
    for (const auto& eig : detail::eigenvalues(src.A)) radius = std::max(radius, std::abs(eig));
    const double target = 0.3 + 0.6 * rng.uniform();
    if (radius > 0.0) src.A = (target / radius) * src.A;

    src.B = Matrix(m, m);
    for (double& v : src.B.data) v = 2.0 * rng.uniform() - 1.0;
    for (std::size_t i = 0; i < m; ++i) src.B(i, i) += 1.0;

    src.C = Matrix(p, m);
    for (double& v : src.C.data) v = 2.0 * rng.uniform() - 1.0;

    src.N = Matrix(p, p);
    for (double& v : src.N.data) v = 0.4 * (2.0 * rng.uniform() - 1.0);
    for (std::size_t i = 0; i < p; ++i) src.N(i, i) += 0.8;

    src.x0_mean.assign(m, 0.0);
    Matrix l(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j) l(i, j) = rng.uniform();
    src.x0_cov = l * transpose(l);
    return src;
}

Matrix random_q(Rng& rng, std::size_t p) {
    Vector diag(p);
    for (double& v : diag) v = 0.5 + 1.5 * rng.uniform();
    return Matrix::diagonal(diag);
}

} // namespace

TEST_CASE("innovations_covariance basic values") {
    GaussMarkovSource ident{Matrix::identity(2), Matrix::identity(2), Matrix::identity(2),
                            Matrix::identity(2), Vector{0.0, 0.0}, Matrix(2, 2)};
    CHECK(max_abs(innovations_covariance(ident, Matrix(2, 2)) - Matrix::identity(2)) < 1e-15);

    const auto scal = scalar_source(0.9, 1.0, 1.0, 0.1);
    CHECK(innovations_covariance(scal, Matrix{{5.0}})(0, 0) == Catch::Approx(5.01));

    GaussMarkovSource partial{Matrix::identity(2), Matrix::identity(2), Matrix{{1.0, 0.0}},
                              Matrix{{0.5}}, Vector{0.0, 0.0}, Matrix(2, 2)};
    CHECK(innovations_covariance(partial, Matrix::diagonal({2.0, 3.0}))(0, 0) ==
          Catch::Approx(2.25));
}

TEST_CASE("innovations_covariance flags a singular result") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.0); // N = 0
    CHECK_THROWS_AS(innovations_covariance(src, Matrix{{0.0}}), model_error);
}

TEST_CASE("build_operators: nothing transmitted when the budget covers everything") {
    const auto alloc = reverse_waterfill({4.0, 1.0}, 5.0);
    const auto ops = build_operators(alloc, Matrix::identity(2), Matrix::identity(2));
    CHECK(max_abs(ops.A_op) == 0.0);
    CHECK(max_abs(ops.B_op) == 0.0);
    CHECK(ops.power() == 0.0);
}

TEST_CASE("build_operators: symmetric case with unit channel noise") {
    const auto alloc = reverse_waterfill({1.0, 1.0}, 1.0);
    const auto ops = build_operators(alloc, Matrix::identity(2), Matrix::identity(2));
    CHECK(ops.A_op(0, 0) == Catch::Approx(1.0));
    CHECK(ops.A_op(1, 1) == Catch::Approx(1.0));
    CHECK(ops.B_op(0, 0) == Catch::Approx(0.5));
    CHECK(ops.B_op(1, 1) == Catch::Approx(0.5));
    const Matrix ba = ops.B_op * ops.A_op;
    CHECK(ba(0, 0) == Catch::Approx(0.5)); // equals H
    CHECK(ba(1, 1) == Catch::Approx(0.5));
}

TEST_CASE("build_operators: inactive dimension stays silent") {
    const auto alloc = reverse_waterfill({4.0, 1.0}, 2.0);
    const auto ops = build_operators(alloc, Matrix::identity(2), Matrix::diagonal({2.0, 2.0}));
    CHECK(ops.A_op(0, 0) == Catch::Approx(std::sqrt(1.5)));
    CHECK(ops.A_op(1, 1) == 0.0);
    CHECK(ops.B_op(0, 0) == Catch::Approx(std::sqrt(0.375)));
    CHECK(ops.B_op(1, 1) == 0.0);
}

TEST_CASE("build_operators validates Q") {
    const auto alloc = reverse_waterfill({1.0, 1.0}, 1.0);
    CHECK_THROWS_AS(build_operators(alloc, Matrix::identity(2), Matrix{{1.0, 0.2}, {0.2, 1.0}}),
                    precondition_error);
    CHECK_THROWS_AS(build_operators(alloc, Matrix::identity(2), Matrix::diagonal({1.0, 0.0})),
                    precondition_error);
}

TEST_CASE("operator identities hold for random allocations") {
    Rng rng(2001);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t p = 1 + static_cast<std::size_t>(rng.uniform() * 3);
        Vector lambda(p);
        double sum = 0.0;
        for (double& l : lambda) {
            l = 0.2 + 5.0 * rng.uniform();
            sum += l;
        }
        const auto alloc = reverse_waterfill(lambda, sum * (0.05 + 0.9 * rng.uniform()));
        Matrix s(p, p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i; j < p; ++j) s(i, j) = s(j, i) = rng.uniform();
        const Matrix e = transpose(sym_eig(s + static_cast<double>(p) * Matrix::identity(p)).vectors);
        const Matrix q = random_q(rng, p);
        const auto ops = build_operators(alloc, e, q);

        const Matrix h = Matrix::diagonal(alloc.eta);
        const Matrix hd = Matrix::diagonal(alloc.eta) * Matrix::diagonal(alloc.delta);
        CHECK(max_abs(ops.B_op * ops.A_op - h) <= 1e-12);
        CHECK(max_abs(ops.B_op * ops.Q * transpose(ops.B_op) - hd) <= 1e-12);
        // per-dimension SNR identity on active dimensions
        for (std::size_t i = 0; i < p; ++i) {
            if (alloc.eta[i] == 0.0) continue;
            const double snr = ops.A_op(i, i) * ops.A_op(i, i) * alloc.lambda[i] / q(i, i);
            CHECK(std::abs(1.0 + snr - alloc.lambda[i] / alloc.delta[i]) <= 1e-12);
        }
    }
}

TEST_CASE("riccati_step: zero-rate budget reduces to pure prediction") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.1);
    const auto stage = riccati_step(src, Matrix{{0.0}}, 0.5, Matrix::identity(1));
    CHECK(stage.lambda_cov(0, 0) == Catch::Approx(0.01));
    CHECK(stage.ops.allocation.eta[0] == 0.0);
    CHECK(stage.sigma_next(0, 0) == Catch::Approx(1.0)); // a^2*0 + b^2
}

TEST_CASE("riccati_step at the stationary point reproduces it") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.1);
    const auto sol = stationary_solution(src, 0.5, Matrix::identity(1), 1e-13);
    const auto stage = riccati_step(src, sol.sigma_inf, 0.5, Matrix::identity(1));
    CHECK(max_abs(stage.sigma_next - sol.sigma_inf) < 1e-12);
}

TEST_CASE("riccati_step is invariant to the eigenvector sign convention") {
    Rng rng(2002);
    GaussMarkovSource src = random_stable_source(rng, 3, 2);
    const Matrix sigma = src.x0_cov;
    const double d = 0.3;
    const Matrix q = Matrix::identity(2);
    const auto stage = riccati_step(src, sigma, d, q);

    // flip every eigenbasis row sign; the effective maps are unchanged
    Matrix flipped = stage.ops.E;
    for (std::size_t j = 0; j < flipped.cols; ++j) {
        flipped(0, j) = -flipped(0, j);
        flipped(1, j) = -flipped(1, j);
    }
    const auto ops2 = build_operators(stage.ops.allocation, flipped, q);
    const auto up = detail::filter_update(src, ops2, sigma);
    CHECK(max_abs(up.sigma_next - stage.sigma_next) < 1e-12);
}

TEST_CASE("stationary solution: zero-rate case solves the Lyapunov equation") {
    Rng rng(2003);
    const GaussMarkovSource src = random_stable_source(rng, 3, 2);
    const double huge = 1e9;
    const auto sol = stationary_solution(src, huge, Matrix::identity(2), 1e-12);
    CHECK(sol.rate_nats == 0.0);
    const Matrix lyap = src.A * sol.sigma_inf * transpose(src.A) + src.B * transpose(src.B);
    CHECK(max_abs(lyap - sol.sigma_inf) < 1e-9);
}

TEST_CASE("stationary solution matches the independent scalar oracle") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.1);
    const auto sol = stationary_solution(src, 0.5, Matrix::identity(1), 1e-13);
    const auto oracle = scalar_oracle(0.9, 1.0, 1.0, 0.1, 0.5, 1.0);
    CHECK(sol.sigma_inf(0, 0) == Catch::Approx(oracle.sigma).margin(1e-10));
    CHECK(sol.lambda_inf[0] == Catch::Approx(oracle.lambda).margin(1e-10));
    CHECK(sol.rate_nats == Catch::Approx(oracle.rate).margin(1e-10));
    CHECK(sol.power == Catch::Approx(oracle.power).margin(1e-10));

    // frozen values from the standalone fixed-point script
    CHECK(sol.sigma_inf(0, 0) == Catch::Approx(1.407348113478887).margin(1e-9));
    CHECK(sol.rate_nats == Catch::Approx(0.520967390226863).margin(1e-9));
    CHECK(sol.power == Catch::Approx(1.834696226957774).margin(1e-9));
}

TEST_CASE("stationary solution: rate equals matched-channel capacity") {
    Rng rng(2004);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 4);
        const std::size_t p = 1 + static_cast<std::size_t>(rng.uniform() * 3);
        const GaussMarkovSource src = random_stable_source(rng, m, p);
        const Matrix q = random_q(rng, p);
        const auto zero_rate = stationary_solution(src, 1e9, q, 1e-12);
        const double d = trace(zero_rate.stage.lambda_cov) * (0.05 + 0.7 * rng.uniform());
        const auto sol = stationary_solution(src, d, q, 1e-12);

        // (1/2) ln det(I + A_op diag(lambda) A_opᵀ Q^{-1}) for diagonal pieces
        double cap = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            const double snr =
                sol.operators.A_op(i, i) * sol.operators.A_op(i, i) * sol.lambda_inf[i] / q(i, i);
            cap += 0.5 * std::log1p(snr);
        }
        CHECK(std::abs(cap - sol.rate_nats) <= 1e-9);
    }
}

TEST_CASE("stationary solution reports non-convergence loudly") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.1);
    CHECK_THROWS_AS(stationary_solution(src, 0.5, Matrix::identity(1), 1e-13, 2),
                    convergence_error);
}

TEST_CASE("decoder-noise forms coincide at unit channel noise") {
    Rng rng(2005);
    const GaussMarkovSource src = random_stable_source(rng, 3, 2);
    const Matrix q = Matrix::identity(2);
    const auto a = stationary_solution(src, 0.4, q, 1e-12, 20000, DecoderNoiseTerm::q_weighted);
    const auto b = stationary_solution(src, 0.4, q, 1e-12, 20000, DecoderNoiseTerm::unweighted);
    CHECK(max_abs(a.sigma_inf - b.sigma_inf) < 1e-11);
    CHECK(a.rate_nats == Catch::Approx(b.rate_nats).margin(1e-11));
}

TEST_CASE("filter innovation covariance equals Etr H diag(lambda) E") {
    Rng rng(2006);
    const GaussMarkovSource src = random_stable_source(rng, 2, 2);
    const auto sol = stationary_solution(src, 0.3, Matrix::identity(2), 1e-12);
    const Matrix et = transpose(sol.e_inf);
    Matrix hl(2, 2);
    for (std::size_t i = 0; i < 2; ++i)
        hl(i, i) = sol.operators.allocation.eta[i] * sol.lambda_inf[i];
    CHECK(max_abs(sol.stage.m_cov - et * hl * sol.e_inf) < 1e-10);
}

TEST_CASE("end_to_end_step: noiseless channel gives the exact test-channel mean") {
    Rng rng(2007);
    const GaussMarkovSource src = random_stable_source(rng, 3, 2);
    auto sol = stationary_solution(src, 0.4, Matrix::identity(2), 1e-12);

    RealizationOperators quiet = sol.operators; // keep B_op from nominal Q
    quiet.Q = Matrix(2, 2);                     // silence the channel draw
    const Vector y{0.7, -0.3};
    FilterState filter{Vector{0.1, -0.2, 0.4}, sol.sigma_inf, 0};
    Rng step_rng(1);
    const auto step = end_to_end_step(src, y, filter, quiet, step_rng);

    const Matrix et = transpose(sol.e_inf);
    const Matrix t_map = et * Matrix::diagonal(sol.operators.allocation.eta) * sol.e_inf;
    const Vector expected = t_map * (y - src.C * filter.xhat);
    CHECK(max_abs(step.y_tilde - (src.C * filter.xhat + expected)) < 1e-12);
}

TEST_CASE("end_to_end_step: nothing sent reproduces the prediction") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.1);
    const auto sol = stationary_solution(src, 1e3, Matrix::identity(1), 1e-12);
    FilterState filter{Vector{0.3}, sol.sigma_inf, 0};
    Rng rng(2);
    const auto step = end_to_end_step(src, Vector{1.0}, filter, sol.operators, rng);
    CHECK(step.y_tilde[0] == Catch::Approx(src.C(0, 0) * filter.xhat[0]).margin(1e-15));
    CHECK(step.channel_input[0] == 0.0);
}

TEST_CASE("pipeline: empirical distortion and power match the stationary solution") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.1);
    const auto sol = stationary_solution(src, 0.5, Matrix::identity(1), 1e-13);
    const auto rep = simulate_pipeline(src, sol, 100000, 11);
    CHECK(std::abs(rep.empirical_distortion - 0.5) <= 3.0 * rep.distortion_se);
    CHECK(std::abs(rep.empirical_power - sol.power) <= 3.0 * rep.power_se);
    CHECK(rep.distortion_trace.size() == 100000);
}

TEST_CASE("pipeline: nothing-sent case settles at the innovation mass") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.1);
    const auto sol = stationary_solution(src, 1e3, Matrix::identity(1), 1e-12);
    const auto rep = simulate_pipeline(src, sol, 100000, 12);
    const double lam = sol.lambda_inf[0];
    CHECK(std::abs(rep.empirical_distortion - lam) <= 4.0 * rep.distortion_se);
    CHECK(rep.empirical_power == 0.0);
}

TEST_CASE("pipeline runs are reproducible for a fixed seed") {
    const auto src = scalar_source(0.9, 1.0, 1.0, 0.1);
    const auto sol = stationary_solution(src, 0.5, Matrix::identity(1), 1e-13);
    const auto a = simulate_pipeline(src, sol, 500, 77);
    const auto b = simulate_pipeline(src, sol, 500, 77);
    CHECK(a.distortion_trace == b.distortion_trace);
    CHECK(a.power_trace == b.power_trace);
}

TEST_CASE("error covariance stays PSD along a trajectory of steps") {
    Rng rng(2008);
    const GaussMarkovSource src = random_stable_source(rng, 3, 2);
    Matrix sigma = src.x0_cov;
    for (int t = 0; t < 50; ++t) {
        const auto stage = riccati_step(src, sigma, 0.25, Matrix::identity(2));
        sigma = stage.sigma_next;
        const auto eig = sym_eig(sigma);
        CHECK(eig.values.back() >= -1e-10);
        CHECK(is_symmetric(sigma, 1e-12));
    }
}
