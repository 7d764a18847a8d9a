#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "nard/errors.hpp"
#include "nard/matrix.hpp"
#include "nard/numerics.hpp"

namespace nard {

/// Reverse water-filling allocation of a distortion budget D across
/// eigen-dimensions: delta_i = min(xi, lambda_i) with the water level xi set
/// so that sum(delta) = D, gains eta_i = 1 - delta_i/lambda_i, and rate
/// (1/2) sum ln(lambda_i / delta_i) in nats.
///
/// When D >= sum(lambda) nothing needs to be transmitted: delta = lambda,
/// eta = 0 and the rate is zero; total_distortion then equals sum(lambda)
/// rather than the requested budget.
struct WaterfillAllocation {
    Vector lambda;           // eigenvalues, in the caller's order
    double xi = 0.0;         // water level
    Vector delta;            // per-dimension distortion
    Vector eta;              // per-dimension gain, in [0, 1]
    double total_distortion = 0.0; // sum(delta)
    double rate_nats = 0.0;

    std::size_t dims() const { return lambda.size(); }
};

inline WaterfillAllocation reverse_waterfill(const Vector& lambda, double D) {
    if (!(D > 0.0)) throw domain_error("reverse_waterfill: distortion budget must be positive");
    if (lambda.empty()) throw domain_error("reverse_waterfill: empty eigenvalue vector");
    double lambda_sum = 0.0;
    double lambda_max = 0.0;
    for (double l : lambda) {
        if (!(l > 0.0) || !std::isfinite(l))
            throw domain_error("reverse_waterfill: eigenvalues must be positive and finite");
        lambda_sum += l;
        lambda_max = std::max(lambda_max, l);
    }

    const std::size_t p = lambda.size();
    WaterfillAllocation out;
    out.lambda = lambda;
    out.delta.resize(p);
    out.eta.resize(p);

    if (D >= lambda_sum) {
        out.xi = lambda_max;
        out.delta = lambda;
        std::fill(out.eta.begin(), out.eta.end(), 0.0);
        out.total_distortion = lambda_sum;
        out.rate_nats = 0.0;
        return out;
    }

    // Exact piecewise-linear solve of sum_i min(xi, lambda_i) = D: walk the
    // sorted eigenvalues; below mu[k] the remaining p-k dimensions share the
    // budget equally.
    Vector mu = lambda;
    std::sort(mu.begin(), mu.end());
    double consumed = 0.0;
    double xi = D / static_cast<double>(p);
    for (std::size_t k = 0; k < p; ++k) {
        const double cand = (D - consumed) / static_cast<double>(p - k);
        if (cand <= mu[k]) {
            xi = cand;
            break;
        }
        consumed += mu[k];
        xi = mu[k]; // keeps xi well-defined if rounding exhausts the loop
    }

    out.xi = xi;
    double total = 0.0;
    double rate = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        const double d = std::min(xi, lambda[i]);
        out.delta[i] = d;
        out.eta[i] = std::clamp(1.0 - d / lambda[i], 0.0, 1.0);
        total += d;
        rate += 0.5 * std::log(lambda[i] / d);
    }
    out.total_distortion = total;
    out.rate_nats = std::max(rate, 0.0);
    return out;
}

/// (1/2) sum ln(lambda_i / delta_i).  Any delta_i = 0 means infinite rate.
inline double rate_of(const WaterfillAllocation& alloc) {
    require(alloc.lambda.size() == alloc.delta.size(), "rate_of: inconsistent allocation");
    double rate = 0.0;
    for (std::size_t i = 0; i < alloc.lambda.size(); ++i) {
        if (!(alloc.delta[i] > 0.0))
            throw domain_error("rate_of: zero per-dimension distortion gives infinite rate");
        rate += 0.5 * std::log(alloc.lambda[i] / alloc.delta[i]);
    }
    return rate;
}

/// Inverse of the water-fill rate: the unique D with
/// reverse_waterfill(lambda, D).rate_nats = R.
///
/// Uses the closed form D = p * (prod(lambda) * e^{-2R})^{1/p} when the
/// resulting water level sits below every eigenvalue; otherwise bisects on D
/// (the closed-form value is then a valid lower bracket, since allocating the
/// budget equally understates the true rate once some dimension saturates).
inline double distortion_of_rate(const Vector& lambda, double R) {
    if (!(R >= 0.0)) throw domain_error("distortion_of_rate: rate must be nonnegative");
    double lambda_sum = 0.0;
    double lambda_min = std::numeric_limits<double>::infinity();
    double log_sum = 0.0;
    for (double l : lambda) {
        if (!(l > 0.0)) throw domain_error("distortion_of_rate: eigenvalues must be positive");
        lambda_sum += l;
        lambda_min = std::min(lambda_min, l);
        log_sum += std::log(l);
    }
    if (lambda.empty()) throw domain_error("distortion_of_rate: empty eigenvalue vector");
    if (R == 0.0) return lambda_sum;

    const double p = static_cast<double>(lambda.size());
    const double flat = p * std::exp((log_sum - 2.0 * R) / p);
    if (flat / p < lambda_min) return flat;

    const double hi = lambda_sum;
    const double lo = std::min(flat, hi * (1.0 - 1e-15));
    const double d = bisect(
        [&](double D) { return reverse_waterfill(lambda, D).rate_nats - R; }, lo, hi,
        1e-13 * hi, 200);
    return d;
}

} // namespace nard
