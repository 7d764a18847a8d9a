#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "nard/errors.hpp"
#include "nard/matrix.hpp"
#include "nard/numerics.hpp"
#include "nard/rng.hpp"
#include "nard/source_model.hpp"
#include "nard/waterfill.hpp"

namespace nard {

/// Innovation covariance of the observation process given a filter error
/// covariance sigma: C*sigma*Cᵀ + N*Nᵀ.  Must be positive definite (which
/// the observation-noise invariant N*Nᵀ > 0 guarantees for PSD sigma).
inline Matrix innovations_covariance(const GaussMarkovSource& src, const Matrix& sigma) {
    src.check_shapes();
    require(sigma.rows == src.state_dim() && sigma.cols == src.state_dim(),
            "innovations_covariance: sigma must be m x m");
    Matrix lam = symmetrize(src.C * sigma * transpose(src.C) + src.N * transpose(src.N));
    const SymEig eig = sym_eig(lam);
    if (!(eig.values.back() > 0.0))
        throw model_error("innovations covariance is not positive definite (is N*Ntr PD?)");
    return lam;
}

/// Encoder/decoder pair realizing one stage of the pipeline around a
/// diagonal AWGN channel with noise covariance Q:
///
///   compression    A_op = sqrt(Q * Delta^{-1} * H)   (diagonal)
///   decompression  B_op = sqrt(H * Delta * Q^{-1})   (diagonal)
///
/// E holds the innovation eigenbasis with rows as eigenvectors, so that
/// E * Lambda * Eᵀ = diag(lambda) and Gamma = E * K has independent
/// components.  Dimensions with eta_i = 0 carry nothing: both operator
/// diagonals are zero there.
struct RealizationOperators {
    Matrix E;    // p x p, orthogonal
    Matrix Q;    // p x p, diagonal positive
    Matrix A_op; // p x p, diagonal
    Matrix B_op; // p x p, diagonal
    WaterfillAllocation allocation;

    std::size_t dims() const { return E.rows; }

    /// Transmit power trace E{A_t * A_tᵀ} = sum_i q_i * eta_i * lambda_i / delta_i.
    double power() const {
        double s = 0.0;
        for (std::size_t i = 0; i < dims(); ++i)
            s += A_op(i, i) * A_op(i, i) * allocation.lambda[i];
        return s;
    }
};

inline RealizationOperators build_operators(const WaterfillAllocation& alloc, const Matrix& e,
                                            const Matrix& q) {
    const std::size_t p = alloc.dims();
    require(e.rows == p && e.cols == p, "build_operators: eigenbasis must be p x p");
    require(q.rows == p && q.cols == p, "build_operators: Q must be p x p");
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            if (i == j) {
                if (!(q(i, i) > 0.0))
                    throw precondition_error("build_operators: Q diagonal must be positive");
            } else if (q(i, j) != 0.0) {
                throw precondition_error("build_operators: Q must be diagonal");
            }
        }

    RealizationOperators ops;
    ops.E = e;
    ops.Q = q;
    ops.A_op = Matrix(p, p);
    ops.B_op = Matrix(p, p);
    ops.allocation = alloc;
    for (std::size_t i = 0; i < p; ++i) {
        if (alloc.eta[i] == 0.0) continue;
        if (!(alloc.delta[i] > 0.0))
            throw domain_error("build_operators: active dimension with zero distortion");
        ops.A_op(i, i) = std::sqrt(q(i, i) * alloc.eta[i] / alloc.delta[i]);
        ops.B_op(i, i) = std::sqrt(alloc.eta[i] * alloc.delta[i] / q(i, i));
    }
    return ops;
}

/// Decoder state: conditional mean and error covariance of the state given
/// the reconstructed observations.
struct FilterState {
    Vector xhat;
    Matrix sigma;
    std::size_t t = 0;
};

/// Which decoder-noise term enters the filter innovation covariance M:
/// the covariance-consistent Eᵀ(B_op Q B_opᵀ)E, or the unweighted
/// Eᵀ(B_op B_opᵀ)E.  The two coincide for Q = I.
enum class DecoderNoiseTerm { q_weighted, unweighted };

namespace detail {

struct FilterUpdate {
    Matrix chat;   // effective observation map Eᵀ H E C
    Matrix m_cov;  // innovation covariance of the reconstruction
    Matrix gain;   // A * sigma * chatᵀ * pinv(M)
    Matrix sigma_next;
};

/// Measurement/time update of the modified Kalman filter for a fixed
/// operator set.  Uses the pseudo-inverse of M so that dimensions carrying
/// no information (eta_i = 0) contribute nothing to the gain.
inline FilterUpdate filter_update(const GaussMarkovSource& src, const RealizationOperators& ops,
                                  const Matrix& sigma,
                                  DecoderNoiseTerm noise_term = DecoderNoiseTerm::q_weighted) {
    const std::size_t p = ops.dims();
    const Matrix et = transpose(ops.E);
    Matrix h(p, p);
    for (std::size_t i = 0; i < p; ++i) h(i, i) = ops.allocation.eta[i];

    const Matrix t_map = et * h * ops.E; // Eᵀ H E
    FilterUpdate up;
    up.chat = t_map * src.C;

    Matrix noise(p, p);
    for (std::size_t i = 0; i < p; ++i) {
        const double b = ops.B_op(i, i);
        noise(i, i) = (noise_term == DecoderNoiseTerm::q_weighted) ? b * ops.Q(i, i) * b : b * b;
    }
    up.m_cov = symmetrize(up.chat * sigma * transpose(up.chat) +
                          t_map * (src.N * transpose(src.N)) * transpose(t_map) +
                          et * noise * ops.E);

    const Matrix m_pinv = pinv_psd(up.m_cov);
    const Matrix cross = src.A * sigma * transpose(up.chat); // m x p
    up.gain = cross * m_pinv;
    up.sigma_next =
        symmetrize(src.A * sigma * transpose(src.A) - up.gain * transpose(cross) +
                   src.B * transpose(src.B));

    const SymEig eig = sym_eig(up.sigma_next);
    const double scale = std::max(1.0, max_abs(up.sigma_next));
    if (eig.values.back() < -1e-10 * scale)
        throw numerical_error("filter update produced an indefinite covariance");
    return up;
}

} // namespace detail

/// One step of the coupled recursion: innovation covariance, its
/// eigendecomposition, water-fill allocation, operator construction and the
/// modified Kalman covariance update.
struct RiccatiStage {
    Matrix lambda_cov; // innovation covariance at this step
    RealizationOperators ops;
    Matrix chat;
    Matrix m_cov;
    Matrix gain;
    Matrix sigma_next;
};

inline RiccatiStage riccati_step(const GaussMarkovSource& src, const Matrix& sigma, double D,
                                 const Matrix& q,
                                 DecoderNoiseTerm noise_term = DecoderNoiseTerm::q_weighted) {
    if (!(D > 0.0)) throw domain_error("riccati_step: distortion budget must be positive");
    RiccatiStage stage;
    stage.lambda_cov = innovations_covariance(src, sigma);
    const SymEig eig = sym_eig(stage.lambda_cov);
    const Matrix e = transpose(eig.vectors); // rows are eigenvectors
    const WaterfillAllocation alloc = reverse_waterfill(eig.values, D);
    stage.ops = build_operators(alloc, e, q);

    const detail::FilterUpdate up = detail::filter_update(src, stage.ops, sigma, noise_term);
    stage.chat = up.chat;
    stage.m_cov = up.m_cov;
    stage.gain = up.gain;
    stage.sigma_next = up.sigma_next;
    return stage;
}

/// Fixed point of the coupled recursion, together with the stationary
/// allocation, operators, rate and transmit power.
struct StationarySolution {
    Matrix sigma_inf;
    Vector lambda_inf; // innovation eigenvalues at the fixed point, descending
    Matrix e_inf;      // eigenbasis (rows), E * Lambda * Eᵀ = diag(lambda_inf)
    RealizationOperators operators;
    RiccatiStage stage; // full stage evaluated at the fixed point
    double rate_nats = 0.0;
    double power = 0.0;
    double distortion = 0.0; // achieved total distortion, min(D, trace Lambda_inf)
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Iterate riccati_step from sigma = x0_cov until the covariance stops
/// moving (max-abs residual below tol).  If the residual fails to decrease
/// for ten consecutive steps the iterate is averaged with its predecessor.
/// Convergence of the coupled recursion is monitored, not assumed: hitting
/// max_iter throws convergence_error carrying the last residual.
inline StationarySolution stationary_solution(const GaussMarkovSource& src, double D,
                                              const Matrix& q, double tol = 1e-12,
                                              std::size_t max_iter = 20000,
                                              DecoderNoiseTerm noise_term =
                                                  DecoderNoiseTerm::q_weighted) {
    src.check_shapes();
    if (!(D > 0.0)) throw domain_error("stationary_solution: distortion budget must be positive");
    require(tol > 0.0, "stationary_solution: tol must be positive");

    Matrix sigma = symmetrize(src.x0_cov);
    double residual = std::numeric_limits<double>::infinity();
    std::size_t non_monotone = 0;
    bool damped = false;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        RiccatiStage stage = riccati_step(src, sigma, D, q, noise_term);
        Matrix next = stage.sigma_next;
        if (damped) next = symmetrize(0.5 * (next + sigma));
        const double r = max_abs(next - sigma);
        if (r >= residual) {
            if (++non_monotone >= 10) damped = true;
        } else {
            non_monotone = 0;
        }
        residual = r;
        sigma = std::move(next);
        if (residual < tol) break;
    }
    if (residual >= tol)
        throw convergence_error("stationary_solution: no fixed point within max_iter", residual);

    StationarySolution sol;
    sol.stage = riccati_step(src, sigma, D, q, noise_term);
    sol.sigma_inf = sigma;
    sol.operators = sol.stage.ops;
    sol.e_inf = sol.stage.ops.E;
    sol.lambda_inf = sol.stage.ops.allocation.lambda;
    sol.rate_nats = sol.stage.ops.allocation.rate_nats;
    sol.power = sol.stage.ops.power();
    sol.distortion = sol.stage.ops.allocation.total_distortion;
    sol.iterations = it + 1;
    sol.residual = residual;
    return sol;
}

/// Output of one pass through the encoder - AWGN channel - decoder chain.
struct StepResult {
    Vector y_tilde;        // reconstruction of the observation
    Vector channel_input;  // A_t
    Vector channel_output; // B_t
    FilterState next;
};

/// One end-to-end step:
///   K = Y - C*xhat,  Gamma = E*K,  A = A_op*Gamma,  B = A + Z (Z ~ N(0, Q)),
///   Gamma~ = B_op*B,  K~ = Eᵀ*Gamma~,  Y~ = K~ + C*xhat,
/// followed by the modified Kalman update driven by Y~.
inline StepResult end_to_end_step(const GaussMarkovSource& src, const Vector& y,
                                  const FilterState& filter, const RealizationOperators& ops,
                                  Rng& rng) {
    const std::size_t p = ops.dims();
    require(y.size() == p && filter.xhat.size() == src.state_dim(),
            "end_to_end_step: dimension mismatch");

    const Vector y_pred = src.C * filter.xhat;
    const Vector innov = y - y_pred;
    const Vector gamma = ops.E * innov;

    StepResult out;
    out.channel_input = ops.A_op * gamma;
    out.channel_output = out.channel_input;
    for (std::size_t i = 0; i < p; ++i)
        out.channel_output[i] += std::sqrt(ops.Q(i, i)) * rng.normal();

    const Vector gamma_tilde = ops.B_op * out.channel_output;
    const Vector k_tilde = transpose(ops.E) * gamma_tilde;
    out.y_tilde = k_tilde + y_pred;

    const detail::FilterUpdate up = detail::filter_update(src, ops, filter.sigma);
    out.next.xhat = src.A * filter.xhat + up.gain * (out.y_tilde - y_pred);
    out.next.sigma = up.sigma_next;
    out.next.t = filter.t + 1;
    return out;
}

/// Monte Carlo record of a stationary pipeline run.  Standard errors use
/// batch means (about sqrt(T)-sized blocks) since consecutive step costs
/// are serially correlated through the state.
struct SimulationReport {
    std::vector<double> distortion_trace; // ||Y_t - Y~_t||^2 per step
    std::vector<double> power_trace;      // ||A_t||^2 per step
    double empirical_distortion = 0.0;
    double distortion_se = 0.0;
    double empirical_power = 0.0;
    double power_se = 0.0;
    std::size_t steps = 0;
};

namespace detail {

inline std::pair<double, double> batch_mean_se(const std::vector<double>& x) {
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    const std::size_t blocks = std::min<std::size_t>(n, 100);
    const std::size_t per = n / blocks;
    double var = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
        double bm = 0.0;
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) bm += x[i];
        bm /= static_cast<double>(per);
        var += (bm - mean) * (bm - mean);
    }
    var /= static_cast<double>(blocks) * std::max<double>(1.0, static_cast<double>(blocks - 1));
    return {mean, std::sqrt(var)};
}

} // namespace detail

/// Run the stationary realization for T steps.  The filter starts at the
/// fixed point (xhat = x0_mean, sigma = sigma_inf) and the initial state is
/// drawn with error covariance sigma_inf, so the error process is stationary
/// from the first step.  Draw order per run: initial state, then per step
/// observation noise, channel noise, process noise.
inline SimulationReport simulate_pipeline(const GaussMarkovSource& src,
                                          const StationarySolution& stat, std::size_t T,
                                          std::uint64_t seed) {
    require(T >= 1, "simulate_pipeline: T must be >= 1");
    Rng rng(seed);

    const Matrix err_root = sqrt_psd(stat.sigma_inf);
    Vector x = gaussian_sample(rng, src.x0_mean, err_root);
    FilterState filter{src.x0_mean, stat.sigma_inf, 0};

    SimulationReport rep;
    rep.steps = T;
    rep.distortion_trace.reserve(T);
    rep.power_trace.reserve(T);

    const std::size_t d = src.N.cols;
    const std::size_t k = src.B.cols;
    for (std::size_t t = 0; t < T; ++t) {
        Vector v(d);
        for (double& z : v) z = rng.normal();
        const Vector y = src.C * x + src.N * v;

        StepResult step = end_to_end_step(src, y, filter, stat.operators, rng);
        rep.distortion_trace.push_back(squared_norm(y - step.y_tilde));
        rep.power_trace.push_back(squared_norm(step.channel_input));
        filter = std::move(step.next);

        Vector w(k);
        for (double& z : w) z = rng.normal();
        x = src.A * x + src.B * w;
    }

    auto [dm, dse] = detail::batch_mean_se(rep.distortion_trace);
    auto [pm, pse] = detail::batch_mean_se(rep.power_trace);
    rep.empirical_distortion = dm;
    rep.distortion_se = dse;
    rep.empirical_power = pm;
    rep.power_se = pse;
    return rep;
}

} // namespace nard
