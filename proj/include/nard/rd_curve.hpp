#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "nard/causal_filter.hpp"
#include "nard/errors.hpp"
#include "nard/matrix.hpp"
#include "nard/numerics.hpp"
#include "nard/source_model.hpp"

namespace nard {

/// One point of the nonanticipative rate-distortion curve.
struct RDPoint {
    double distortion = 0.0; // requested average squared-error budget D
    double rate_nats = 0.0;
    double rate_bits = 0.0;
    double power = 0.0;
    bool converged = false;
};

inline RDPoint rna_of_distortion(const GaussMarkovSource& src, double D, const Matrix& q,
                                 double tol = 1e-12, std::size_t max_iter = 20000) {
    RDPoint pt;
    pt.distortion = D;
    try {
        const StationarySolution sol = stationary_solution(src, D, q, tol, max_iter);
        pt.rate_nats = sol.rate_nats;
        pt.rate_bits = sol.rate_nats / std::log(2.0);
        pt.power = sol.power;
        pt.converged = true;
        return pt;
    } catch (const convergence_error&) {
    } catch (const numerical_error&) {
    }
    pt.rate_nats = std::numeric_limits<double>::quiet_NaN();
    pt.rate_bits = std::numeric_limits<double>::quiet_NaN();
    pt.power = std::numeric_limits<double>::quiet_NaN();
    pt.converged = false;
    return pt;
}

namespace detail {

/// Stationary covariance of the pure-prediction (zero-rate) filter, the
/// fixed point of sigma = A sigma Aᵀ + B Bᵀ.  Only exists for stable A;
/// divergence is reported as a domain error.
inline Matrix prediction_covariance(const GaussMarkovSource& src, double tol = 1e-13,
                                    std::size_t max_iter = 200000) {
    Matrix sigma = symmetrize(src.x0_cov);
    const Matrix bbt = symmetrize(src.B * transpose(src.B));
    for (std::size_t it = 0; it < max_iter; ++it) {
        Matrix next = symmetrize(src.A * sigma * transpose(src.A) + bbt);
        const double r = max_abs(next - sigma);
        const double scale = std::max(1.0, max_abs(next));
        if (scale > 1e100)
            throw domain_error("prediction covariance diverges (A is not stable)");
        sigma = std::move(next);
        if (r < tol * scale) return sigma;
    }
    throw domain_error("prediction covariance iteration did not settle (A near-unstable)");
}

} // namespace detail

/// Distortion achieving a prescribed rate: inverts rna_of_distortion by
/// bisection over D.  The bracket is [1e-9 * trace(Lambda_pred),
/// trace(Lambda_pred)] where Lambda_pred is the innovation covariance of the
/// zero-rate prediction filter; rates above the one achievable at the low
/// end raise bracket_error.
inline RDPoint rna_inverse(const GaussMarkovSource& src, double R, const Matrix& q,
                           double tol = 1e-12, std::size_t max_iter = 20000) {
    if (!(R >= 0.0)) throw domain_error("rna_inverse: rate must be nonnegative");
    const Matrix sigma_pred = detail::prediction_covariance(src);
    const Matrix lambda_pred = innovations_covariance(src, sigma_pred);
    const double d_top = trace(lambda_pred);

    if (R == 0.0) {
        RDPoint pt = rna_of_distortion(src, d_top, q, tol, max_iter);
        pt.distortion = d_top;
        return pt;
    }

    const double d_lo = 1e-9 * d_top;
    const RDPoint low = rna_of_distortion(src, d_lo, q, tol, max_iter);
    if (!low.converged || low.rate_nats < R)
        throw bracket_error("rna_inverse: requested rate exceeds the achievable range on the bracket");

    const double d_star = bisect(
        [&](double D) {
            const RDPoint pt = rna_of_distortion(src, D, q, tol, max_iter);
            if (!pt.converged)
                throw convergence_error("rna_inverse: stationary solve failed inside bisection", 0.0);
            return R - pt.rate_nats; // increasing in D
        },
        d_lo, d_top, 1e-10 * d_top, 200);

    RDPoint pt = rna_of_distortion(src, d_star, q, tol, max_iter);
    pt.distortion = d_star;
    return pt;
}

/// Evaluate the curve on an ascending grid of distortion budgets.  A point
/// that fails to converge is marked and the sweep continues.
inline std::vector<RDPoint> sweep(const GaussMarkovSource& src, const std::vector<double>& d_grid,
                                  const Matrix& q, double tol = 1e-12,
                                  std::size_t max_iter = 20000) {
    require(!d_grid.empty(), "sweep: empty distortion grid");
    for (std::size_t i = 0; i < d_grid.size(); ++i) {
        require(d_grid[i] > 0.0, "sweep: grid values must be positive");
        require(i == 0 || d_grid[i] > d_grid[i - 1], "sweep: grid must be strictly ascending");
    }
    std::vector<RDPoint> out;
    out.reserve(d_grid.size());
    for (double d : d_grid) out.push_back(rna_of_distortion(src, d, q, tol, max_iter));
    return out;
}

} // namespace nard
