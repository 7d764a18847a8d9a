#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nard/errors.hpp"
#include "nard/matrix.hpp"
#include "nard/rng.hpp"
#include "nard/source_model.hpp"

namespace nard {

namespace detail {
inline std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    while (exp--) r *= base;
    return r;
}
} // namespace detail

/// Nested conditional tables q_i(y_i | y^{i-1}, x^i): one table per stage,
/// indexed by the reconstruction history, the source path prefix and the
/// candidate symbol.  Structurally causal by construction: stage i never
/// sees source symbols past x_i.
struct CausalKernel {
    std::size_t x_alphabet = 0;
    std::size_t y_alphabet = 0;
    std::size_t horizon = 0;                // number of stages, n+1
    std::vector<std::vector<double>> stage; // [i]: y_hist * x_path * y, row-major

    std::size_t y_hist_count(std::size_t i) const { return detail::ipow(y_alphabet, i); }
    std::size_t x_path_count(std::size_t i) const { return detail::ipow(x_alphabet, i + 1); }

    double& at(std::size_t i, std::size_t y_hist, std::size_t x_path, std::size_t y) {
        return stage[i][(y_hist * x_path_count(i) + x_path) * y_alphabet + y];
    }
    double at(std::size_t i, std::size_t y_hist, std::size_t x_path, std::size_t y) const {
        return stage[i][(y_hist * x_path_count(i) + x_path) * y_alphabet + y];
    }

    static CausalKernel uniform(std::size_t x_alpha, std::size_t y_alpha, std::size_t horizon) {
        CausalKernel k;
        k.x_alphabet = x_alpha;
        k.y_alphabet = y_alpha;
        k.horizon = horizon;
        k.stage.resize(horizon);
        for (std::size_t i = 0; i < horizon; ++i)
            k.stage[i].assign(k.y_hist_count(i) * k.x_path_count(i) * y_alpha,
                              1.0 / static_cast<double>(y_alpha));
        return k;
    }

    /// Every conditional slice sums to one with nonnegative entries.
    void check_normalized(double tol = 1e-12) const {
        for (std::size_t i = 0; i < horizon; ++i) {
            const std::size_t slices = y_hist_count(i) * x_path_count(i);
            for (std::size_t s = 0; s < slices; ++s) {
                double sum = 0.0;
                for (std::size_t y = 0; y < y_alphabet; ++y) {
                    const double v = stage[i][s * y_alphabet + y];
                    if (!(v >= 0.0)) throw precondition_error("causal kernel: negative probability");
                    sum += v;
                }
                if (std::abs(sum - 1.0) > tol)
                    throw precondition_error("causal kernel: conditional slice does not sum to 1");
            }
        }
    }
};

/// Per-stage output laws nu_i(y_i | y^{i-1}).
struct OutputLaw {
    std::size_t y_alphabet = 0;
    std::size_t horizon = 0;
    std::vector<std::vector<double>> stage; // [i]: y_hist * y

    std::size_t y_hist_count(std::size_t i) const { return detail::ipow(y_alphabet, i); }

    double& at(std::size_t i, std::size_t y_hist, std::size_t y) {
        return stage[i][y_hist * y_alphabet + y];
    }
    double at(std::size_t i, std::size_t y_hist, std::size_t y) const {
        return stage[i][y_hist * y_alphabet + y];
    }

    static OutputLaw uniform(std::size_t y_alpha, std::size_t horizon) {
        OutputLaw law;
        law.y_alphabet = y_alpha;
        law.horizon = horizon;
        law.stage.resize(horizon);
        for (std::size_t i = 0; i < horizon; ++i)
            law.stage[i].assign(law.y_hist_count(i) * y_alpha, 1.0 / static_cast<double>(y_alpha));
        return law;
    }
};

/// Joint pmf over source paths x^n and reconstruction paths y^n, both in
/// lexicographic (most-significant-symbol-first) order.
struct JointPmf {
    std::size_t x_alphabet = 0;
    std::size_t y_alphabet = 0;
    std::size_t horizon = 0;
    std::size_t x_paths = 0;
    std::size_t y_paths = 0;
    std::vector<double> p; // x_path * y_paths + y_path

    double& at(std::size_t xp, std::size_t yp) { return p[xp * y_paths + yp]; }
    double at(std::size_t xp, std::size_t yp) const { return p[xp * y_paths + yp]; }
};

inline constexpr std::size_t default_joint_cap = 10000000;

/// P(x^n, y^n) = mu(x^n) * prod_i q_i(y_i | y^{i-1}, x^i).
inline JointPmf induced_joint(const FiniteSource& src, const CausalKernel& kernel,
                              std::size_t cap = default_joint_cap) {
    src.check();
    require(kernel.x_alphabet == src.x_alphabet && kernel.y_alphabet == src.y_alphabet &&
                kernel.horizon == src.horizon,
            "induced_joint: kernel does not match the source");
    const std::size_t n1 = src.horizon;
    JointPmf joint;
    joint.x_alphabet = src.x_alphabet;
    joint.y_alphabet = src.y_alphabet;
    joint.horizon = n1;
    joint.x_paths = checked_pow(src.x_alphabet, n1, default_path_cap);
    joint.y_paths = checked_pow(src.y_alphabet, n1, default_path_cap);
    if (joint.x_paths > cap / joint.y_paths) throw size_error("induced_joint: joint table exceeds cap");
    joint.p.assign(joint.x_paths * joint.y_paths, 0.0);

    const std::vector<double> mu = enumerate_paths(src, n1 - 1);
    std::vector<std::size_t> xpow(n1 + 1), ypow(n1 + 1);
    for (std::size_t l = 0; l <= n1; ++l) {
        xpow[l] = detail::ipow(src.x_alphabet, l);
        ypow[l] = detail::ipow(src.y_alphabet, l);
    }
    for (std::size_t xp = 0; xp < joint.x_paths; ++xp) {
        if (mu[xp] == 0.0) continue;
        for (std::size_t yp = 0; yp < joint.y_paths; ++yp) {
            double prob = mu[xp];
            for (std::size_t i = 0; i < n1 && prob > 0.0; ++i) {
                const std::size_t x_prefix = xp / xpow[n1 - 1 - i];
                const std::size_t y_hist = yp / ypow[n1 - i];
                const std::size_t y_i = (yp / ypow[n1 - 1 - i]) % src.y_alphabet;
                prob *= kernel.at(i, y_hist, x_prefix, y_i);
            }
            joint.at(xp, yp) = prob;
        }
    }
    return joint;
}

/// Marginal of the joint over the first a source symbols and the first b
/// reconstruction symbols; returned indexed by x_prefix * Y^b + y_prefix.
inline std::vector<double> prefix_marginal(const JointPmf& joint, std::size_t a, std::size_t b) {
    require(a <= joint.horizon && b <= joint.horizon, "prefix_marginal: prefix too long");
    const std::size_t xa = detail::ipow(joint.x_alphabet, a);
    const std::size_t yb = detail::ipow(joint.y_alphabet, b);
    const std::size_t x_div = detail::ipow(joint.x_alphabet, joint.horizon - a);
    const std::size_t y_div = detail::ipow(joint.y_alphabet, joint.horizon - b);
    std::vector<double> out(xa * yb, 0.0);
    for (std::size_t xp = 0; xp < joint.x_paths; ++xp) {
        const std::size_t xr = xp / x_div;
        for (std::size_t yp = 0; yp < joint.y_paths; ++yp) {
            const double v = joint.at(xp, yp);
            if (v != 0.0) out[xr * yb + yp / y_div] += v;
        }
    }
    return out;
}

namespace detail {
/// Order-independent summation: identical multisets of doubles give the
/// identical result regardless of how they were indexed.
inline double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (double t : terms) sum += t;
    return sum;
}
} // namespace detail

/// I(X^n; Y^n) in nats of a joint table, with 0 ln 0 = 0.  Marginals and
/// the final sum use order-independent reductions, so the value is exactly
/// invariant under relabeling of symbols.
inline double mutual_information(const JointPmf& joint) {
    std::vector<double> px(joint.x_paths), py(joint.y_paths);
    std::vector<double> scratch;
    for (std::size_t xp = 0; xp < joint.x_paths; ++xp) {
        scratch.assign(joint.p.begin() + xp * joint.y_paths,
                       joint.p.begin() + (xp + 1) * joint.y_paths);
        px[xp] = detail::sorted_sum(scratch);
    }
    for (std::size_t yp = 0; yp < joint.y_paths; ++yp) {
        scratch.resize(joint.x_paths);
        for (std::size_t xp = 0; xp < joint.x_paths; ++xp) scratch[xp] = joint.at(xp, yp);
        py[yp] = detail::sorted_sum(scratch);
    }
    std::vector<double> terms;
    terms.reserve(joint.p.size());
    for (std::size_t xp = 0; xp < joint.x_paths; ++xp)
        for (std::size_t yp = 0; yp < joint.y_paths; ++yp) {
            const double v = joint.at(xp, yp);
            if (v > 0.0) terms.push_back(v * std::log(v / (px[xp] * py[yp])));
        }
    return std::max(detail::sorted_sum(terms), 0.0);
}

inline double mutual_information(const FiniteSource& src, const CausalKernel& kernel) {
    return mutual_information(induced_joint(src, kernel));
}

/// Sum over stages of E[rho(x_i, y_i)] under the joint.
inline double total_distortion(const FiniteSource& src, const JointPmf& joint) {
    const std::size_t n1 = joint.horizon;
    double total = 0.0;
    for (std::size_t xp = 0; xp < joint.x_paths; ++xp)
        for (std::size_t yp = 0; yp < joint.y_paths; ++yp) {
            const double v = joint.at(xp, yp);
            if (v == 0.0) continue;
            double d = 0.0;
            for (std::size_t i = 0; i < n1; ++i)
                d += src.distortion(path_digit(xp, i, src.x_alphabet, n1),
                                    path_digit(yp, i, src.y_alphabet, n1));
            total += v * d;
        }
    return total;
}

/// Per-letter average distortion (1/(n+1)) sum_i E[rho(x_i, y_i)].
inline double average_distortion(const FiniteSource& src, const CausalKernel& kernel) {
    return total_distortion(src, induced_joint(src, kernel)) / static_cast<double>(src.horizon);
}

struct FixedPointResult {
    CausalKernel kernel;
    OutputLaw law;
    std::size_t iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

namespace detail {

/// Exponential-tilt stage update: q_i(y | y_hist, x_path) proportional to
/// e^{s rho(x_i, y)} nu_i(y | y_hist), normalized by log-sum-exp.
inline void tilt_kernel(const FiniteSource& src, double s, const OutputLaw& law,
                        CausalKernel& kernel) {
    for (std::size_t i = 0; i < src.horizon; ++i) {
        const std::size_t yh_count = kernel.y_hist_count(i);
        const std::size_t xp_count = kernel.x_path_count(i);
        for (std::size_t yh = 0; yh < yh_count; ++yh) {
            for (std::size_t xp = 0; xp < xp_count; ++xp) {
                const std::size_t x_i = xp % src.x_alphabet;
                double max_arg = -std::numeric_limits<double>::infinity();
                std::vector<double> arg(src.y_alphabet);
                for (std::size_t y = 0; y < src.y_alphabet; ++y) {
                    arg[y] = s * src.distortion(x_i, y) +
                             std::log(std::max(law.at(i, yh, y), 1e-300));
                    max_arg = std::max(max_arg, arg[y]);
                }
                double z = 0.0;
                for (std::size_t y = 0; y < src.y_alphabet; ++y) z += std::exp(arg[y] - max_arg);
                for (std::size_t y = 0; y < src.y_alphabet; ++y)
                    kernel.at(i, yh, xp, y) = std::exp(arg[y] - max_arg) / z;
            }
        }
    }
}

/// Conditional output marginals nu_i(y | y^{i-1}) of the induced joint.
/// Histories of probability zero keep their previous law.
inline OutputLaw output_marginals(const FiniteSource& src, const JointPmf& joint,
                                  const OutputLaw& previous) {
    OutputLaw law = previous;
    for (std::size_t i = 0; i < src.horizon; ++i) {
        const std::vector<double> hist = prefix_marginal(joint, 0, i);
        const std::vector<double> ext = prefix_marginal(joint, 0, i + 1);
        for (std::size_t yh = 0; yh < law.y_hist_count(i); ++yh) {
            if (hist[yh] <= 0.0) continue;
            for (std::size_t y = 0; y < src.y_alphabet; ++y)
                law.at(i, yh, y) = ext[yh * src.y_alphabet + y] / hist[yh];
        }
    }
    return law;
}

} // namespace detail

/// Alternating solve of the optimal-kernel self-consistency conditions at a
/// fixed tilt s <= 0: the kernel is the exponential tilt of the output law,
/// and the output law is the conditional output marginal of the induced
/// joint.  Convergence of the alternation is monitored, never assumed; a
/// non-convergent run comes back flagged with its last residual.
inline FixedPointResult fixed_point_kernel(const FiniteSource& src, double s, double tol = 1e-13,
                                           std::size_t max_iter = 20000) {
    src.check();
    if (!(s <= 0.0)) throw domain_error("fixed_point_kernel: tilt s must be <= 0");

    FixedPointResult out;
    out.law = OutputLaw::uniform(src.y_alphabet, src.horizon);
    out.kernel = CausalKernel::uniform(src.x_alphabet, src.y_alphabet, src.horizon);

    double residual = std::numeric_limits<double>::infinity();
    std::size_t non_monotone = 0;
    bool damped = false;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        detail::tilt_kernel(src, s, out.law, out.kernel);
        const JointPmf joint = induced_joint(src, out.kernel);
        OutputLaw next = detail::output_marginals(src, joint, out.law);
        double r = 0.0;
        for (std::size_t i = 0; i < src.horizon; ++i)
            for (std::size_t j = 0; j < next.stage[i].size(); ++j)
                r = std::max(r, std::abs(next.stage[i][j] - out.law.stage[i][j]));
        if (damped)
            for (std::size_t i = 0; i < src.horizon; ++i)
                for (std::size_t j = 0; j < next.stage[i].size(); ++j)
                    next.stage[i][j] = 0.5 * (next.stage[i][j] + out.law.stage[i][j]);
        if (r >= residual) {
            if (++non_monotone >= 10) damped = true;
        } else {
            non_monotone = 0;
        }
        residual = r;
        out.law = std::move(next);
        if (residual < tol) break;
    }
    detail::tilt_kernel(src, s, out.law, out.kernel); // exact tilt of the returned law
    out.iterations = std::min(it + 1, max_iter);
    out.residual = residual;
    out.converged = residual < tol;
    return out;
}

/// Rate of the tilted solution through the Lagrangian form: s times the
/// achieved total distortion minus the expected log-normalizers.  Agrees
/// with the mutual information at a self-consistent (kernel, law) pair.
inline double duality_rate_total(const FiniteSource& src, const CausalKernel& kernel,
                                 const OutputLaw& law, double s) {
    const JointPmf joint = induced_joint(src, kernel);
    double total = s * total_distortion(src, joint);
    for (std::size_t i = 0; i < src.horizon; ++i) {
        const std::vector<double> pm = prefix_marginal(joint, i + 1, i);
        const std::size_t yh_count = detail::ipow(src.y_alphabet, i);
        const std::size_t xp_count = detail::ipow(src.x_alphabet, i + 1);
        for (std::size_t xp = 0; xp < xp_count; ++xp) {
            const std::size_t x_i = xp % src.x_alphabet;
            for (std::size_t yh = 0; yh < yh_count; ++yh) {
                const double weight = pm[xp * yh_count + yh];
                if (weight == 0.0) continue;
                double max_arg = -std::numeric_limits<double>::infinity();
                std::vector<double> arg(src.y_alphabet);
                for (std::size_t y = 0; y < src.y_alphabet; ++y) {
                    arg[y] = s * src.distortion(x_i, y) +
                             std::log(std::max(law.at(i, yh, y), 1e-300));
                    max_arg = std::max(max_arg, arg[y]);
                }
                double z = 0.0;
                for (std::size_t y = 0; y < src.y_alphabet; ++y) z += std::exp(arg[y] - max_arg);
                total -= weight * (max_arg + std::log(z));
            }
        }
    }
    return total;
}

struct SolverResult {
    CausalKernel kernel;
    OutputLaw output_law;
    double s = 0.0;               // distortion tilt, <= 0
    double rate_total_nats = 0.0; // mutual information over the whole horizon
    double avg_distortion = 0.0;  // per-letter
    std::size_t iterations = 0;   // total inner fixed-point iterations
    bool converged = false;

    double rate_per_letter_nats() const {
        return rate_total_nats / static_cast<double>(std::max<std::size_t>(kernel.horizon, 1));
    }
};

/// Solve for the kernel meeting a per-letter distortion target by bisecting
/// the tilt s on the achieved distortion, which is nondecreasing in s.  The
/// target must lie strictly above the per-letter distortion floor; targets
/// at or above the zero-rate point return the deterministic best-letter law
/// with s = 0.
inline SolverResult solve_for_distortion(const FiniteSource& src, double d_target,
                                         double tol = 1e-9, double fp_tol = 1e-13,
                                         std::size_t fp_max_iter = 20000) {
    src.check();
    const double d_min = src.min_achievable_distortion();
    const double d_max = src.zero_rate_distortion();
    if (!(d_target > d_min))
        throw domain_error("solve_for_distortion: target at or below the distortion floor");

    SolverResult res;
    if (d_target >= d_max) { // zero rate: send the best constant letter
        res.kernel = CausalKernel::uniform(src.x_alphabet, src.y_alphabet, src.horizon);
        res.output_law = OutputLaw::uniform(src.y_alphabet, src.horizon);
        for (std::size_t i = 0; i < src.horizon; ++i) {
            const Vector p = src.marginal(i);
            std::size_t best = 0;
            double best_avg = std::numeric_limits<double>::infinity();
            for (std::size_t y = 0; y < src.y_alphabet; ++y) {
                double avg = 0.0;
                for (std::size_t x = 0; x < src.x_alphabet; ++x) avg += p[x] * src.distortion(x, y);
                if (avg < best_avg) {
                    best_avg = avg;
                    best = y;
                }
            }
            for (std::size_t j = 0; j < res.output_law.stage[i].size(); ++j)
                res.output_law.stage[i][j] = (j % src.y_alphabet == best) ? 1.0 : 0.0;
            for (std::size_t j = 0; j < res.kernel.stage[i].size(); ++j)
                res.kernel.stage[i][j] = (j % src.y_alphabet == best) ? 1.0 : 0.0;
        }
        res.s = 0.0;
        res.rate_total_nats = 0.0;
        res.avg_distortion = average_distortion(src, res.kernel);
        res.converged = true;
        return res;
    }

    auto distortion_at = [&](double s, FixedPointResult& fp) {
        fp = fixed_point_kernel(src, s, fp_tol, fp_max_iter);
        return average_distortion(src, fp.kernel);
    };

    FixedPointResult fp_lo;
    double s_lo = -1.0;
    double d_lo = distortion_at(s_lo, fp_lo);
    std::size_t inner = fp_lo.iterations;
    while (d_lo > d_target) {
        s_lo *= 2.0;
        if (s_lo < -1e6)
            throw domain_error("solve_for_distortion: target requires an unbounded tilt");
        d_lo = distortion_at(s_lo, fp_lo);
        inner += fp_lo.iterations;
    }

    double s_hi = 0.0; // distortion(0-) = d_max > d_target, never evaluated
    FixedPointResult best = fp_lo;
    double best_s = s_lo;
    double best_gap = std::abs(d_lo - d_target);
    for (int it = 0; it < 200 && best_gap > tol; ++it) {
        const double s_mid = 0.5 * (s_lo + s_hi);
        FixedPointResult fp;
        const double d_mid = distortion_at(s_mid, fp);
        inner += fp.iterations;
        const double gap = std::abs(d_mid - d_target);
        if (gap < best_gap) {
            best_gap = gap;
            best = std::move(fp);
            best_s = s_mid;
        }
        if (d_mid > d_target)
            s_hi = s_mid;
        else
            s_lo = s_mid;
        if (s_hi - s_lo < 1e-15 * std::max(1.0, std::abs(s_lo))) break;
    }

    res.kernel = std::move(best.kernel);
    res.output_law = std::move(best.law);
    res.s = best_s;
    res.rate_total_nats = mutual_information(src, res.kernel);
    res.avg_distortion = average_distortion(src, res.kernel);
    res.iterations = inner;
    res.converged = best.converged && best_gap <= tol;
    return res;
}

/// Directional derivative of the mutual-information functional at q_star in
/// the direction (q - q_star), evaluated by enumeration:
/// sum mu(x) ln(q*(y|x)/nu*(y)) (q - q*)(y|x).
inline double gateaux_derivative(const FiniteSource& src, const CausalKernel& q_star,
                                 const CausalKernel& q) {
    const JointPmf joint_star = induced_joint(src, q_star);
    const JointPmf joint_dir = induced_joint(src, q);
    const std::vector<double> mu = enumerate_paths(src, src.horizon - 1);

    std::vector<double> nu(joint_star.y_paths, 0.0);
    for (std::size_t xp = 0; xp < joint_star.x_paths; ++xp)
        for (std::size_t yp = 0; yp < joint_star.y_paths; ++yp) nu[yp] += joint_star.at(xp, yp);

    double deriv = 0.0;
    for (std::size_t xp = 0; xp < joint_star.x_paths; ++xp) {
        if (mu[xp] == 0.0) continue;
        for (std::size_t yp = 0; yp < joint_star.y_paths; ++yp) {
            const double qs = joint_star.at(xp, yp) / mu[xp];
            const double qd = joint_dir.at(xp, yp) / mu[xp];
            if (qd == qs) continue;
            if (qs <= 0.0)
                throw domain_error("gateaux_derivative: direction leaves the support of q_star");
            deriv += mu[xp] * std::log(qs / nu[yp]) * (qd - qs);
        }
    }
    return deriv;
}

/// Conditional-independence checks of the induced joint:
///   (2)  Y_i independent of (X_{i+1},...,X_n) given (X^i, Y^{i-1})
///   (3)  Y^i independent of X_{i+1} given X^i
/// Reports the largest absolute deviation between the corresponding
/// conditionals over all positive-probability conditioning events.
struct MarkovCheckReport {
    double future_source_violation = 0.0; // condition (2)
    double state_feedback_violation = 0.0; // condition (3)
    bool pass(double tol = 1e-10) const {
        return future_source_violation <= tol && state_feedback_violation <= tol;
    }
};

inline MarkovCheckReport check_markov_equivalence(const JointPmf& joint) {
    MarkovCheckReport rep;
    const std::size_t n1 = joint.horizon;
    const std::size_t x_alpha = joint.x_alphabet;
    const std::size_t y_alpha = joint.y_alphabet;

    for (std::size_t i = 0; i + 1 < n1; ++i) {
        // condition (2): P(y_i | x^n, y^{i-1}) vs P(y_i | x^i, y^{i-1})
        const std::vector<double> full_hist = prefix_marginal(joint, n1, i);
        const std::vector<double> full_ext = prefix_marginal(joint, n1, i + 1);
        const std::vector<double> pre_hist = prefix_marginal(joint, i + 1, i);
        const std::vector<double> pre_ext = prefix_marginal(joint, i + 1, i + 1);
        const std::size_t yh = detail::ipow(y_alpha, i);
        const std::size_t x_div = detail::ipow(x_alpha, n1 - i - 1);
        for (std::size_t xp = 0; xp < joint.x_paths; ++xp) {
            const std::size_t x_pre = xp / x_div;
            for (std::size_t h = 0; h < yh; ++h) {
                const double ph_full = full_hist[xp * yh + h];
                const double ph_pre = pre_hist[x_pre * yh + h];
                if (ph_full <= 0.0 || ph_pre <= 0.0) continue;
                for (std::size_t y = 0; y < y_alpha; ++y) {
                    const double a = full_ext[xp * yh * y_alpha + h * y_alpha + y] / ph_full;
                    const double b = pre_ext[x_pre * yh * y_alpha + h * y_alpha + y] / ph_pre;
                    rep.future_source_violation =
                        std::max(rep.future_source_violation, std::abs(a - b));
                }
            }
        }

        // condition (3): P(x_{i+1} | x^i, y^i) vs P(x_{i+1} | x^i)
        const std::vector<double> xy = prefix_marginal(joint, i + 1, i + 1);
        const std::vector<double> xxy = prefix_marginal(joint, i + 2, i + 1);
        const std::vector<double> x_pre_m = prefix_marginal(joint, i + 1, 0);
        const std::vector<double> x_ext_m = prefix_marginal(joint, i + 2, 0);
        const std::size_t yi = detail::ipow(y_alpha, i + 1);
        const std::size_t xi = detail::ipow(x_alpha, i + 1);
        for (std::size_t xp = 0; xp < xi; ++xp) {
            if (x_pre_m[xp] <= 0.0) continue;
            for (std::size_t h = 0; h < yi; ++h) {
                const double cond = xy[xp * yi + h];
                if (cond <= 0.0) continue;
                for (std::size_t xn = 0; xn < x_alpha; ++xn) {
                    const double a = xxy[(xp * x_alpha + xn) * yi + h] / cond;
                    const double b = x_ext_m[xp * x_alpha + xn] / x_pre_m[xp];
                    rep.state_feedback_violation =
                        std::max(rep.state_feedback_violation, std::abs(a - b));
                }
            }
        }
    }
    return rep;
}

inline MarkovCheckReport check_markov_equivalence(const FiniteSource& src,
                                                  const CausalKernel& kernel) {
    return check_markov_equivalence(induced_joint(src, kernel));
}

// ---------------------------------------------------------------------------
// Brute-force reference: minimize mutual information over the full joint
// conditional table subject to the (linear) causality equalities and the
// distortion halfspace, by projected gradient descent.  The objective is
// convex in this parametrization and the constraint set is a polytope, so
// restarts only guard against slow convergence.
// ---------------------------------------------------------------------------

namespace detail {

/// Euclidean projection of a row onto the probability simplex.
inline void project_simplex(double* row, std::size_t len) {
    thread_local std::vector<double> sorted;
    sorted.assign(row, row + len);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cumsum = 0.0;
    double tau = 0.0;
    std::size_t support = 0;
    for (std::size_t j = 0; j < len; ++j) {
        cumsum += sorted[j];
        const double cand = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (sorted[j] - cand > 0.0) {
            tau = cand;
            support = j + 1;
        }
    }
    (void)support;
    for (std::size_t j = 0; j < len; ++j) row[j] = std::max(row[j] - tau, 0.0);
}

struct OracleProblem {
    std::size_t x_paths = 0;
    std::size_t y_paths = 0;
    std::size_t horizon = 0;
    std::size_t x_alpha = 0;
    std::size_t y_alpha = 0;
    std::vector<double> mu;     // source path probabilities
    std::vector<double> weight; // mu(x) * total distortion(x, y)
    double weight_norm2 = 0.0;
    double budget = 0.0; // total-distortion bound
};

/// Projection onto the causality subspace for stage cut i: the conditional
/// law of the first i+1 reconstruction symbols must not depend on source
/// symbols after position i.  Blocks are disjoint, so the projection adds
/// the per-block mean defect spread over each member's tail coordinates.
inline void project_causality(const OracleProblem& prob, std::size_t i, std::vector<double>& q) {
    const std::size_t group_count = ipow(prob.x_alpha, i + 1);
    const std::size_t members = ipow(prob.x_alpha, prob.horizon - 1 - i); // paths per group
    const std::size_t y_prefixes = ipow(prob.y_alpha, i + 1);
    const std::size_t tails = ipow(prob.y_alpha, prob.horizon - 1 - i);
    thread_local std::vector<double> sums;
    sums.assign(members, 0.0);
    for (std::size_t g = 0; g < group_count; ++g) {
        for (std::size_t pre = 0; pre < y_prefixes; ++pre) {
            double mean = 0.0;
            for (std::size_t k = 0; k < members; ++k) {
                const std::size_t xp = g * members + k;
                double s = 0.0;
                const std::size_t base = xp * prob.y_paths + pre * tails;
                for (std::size_t t = 0; t < tails; ++t) s += q[base + t];
                sums[k] = s;
                mean += s;
            }
            mean /= static_cast<double>(members);
            for (std::size_t k = 0; k < members; ++k) {
                const double adjust = (mean - sums[k]) / static_cast<double>(tails);
                if (adjust == 0.0) continue;
                const std::size_t base = (g * members + k) * prob.y_paths + pre * tails;
                for (std::size_t t = 0; t < tails; ++t) q[base + t] += adjust;
            }
        }
    }
}

/// Worst violation of the feasible set: row normalization, nonnegativity,
/// the distortion halfspace and the causality equalities.
inline double infeasibility(const OracleProblem& prob, const std::vector<double>& q) {
    double worst = 0.0;
    for (std::size_t xp = 0; xp < prob.x_paths; ++xp) {
        double sum = 0.0;
        for (std::size_t yp = 0; yp < prob.y_paths; ++yp) {
            const double v = q[xp * prob.y_paths + yp];
            worst = std::max(worst, -v);
            sum += v;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) dot += prob.weight[j] * q[j];
    worst = std::max(worst, dot - prob.budget);
    for (std::size_t i = 0; i + 1 < prob.horizon; ++i) {
        std::vector<double> probe = q;
        project_causality(prob, i, probe);
        for (std::size_t j = 0; j < q.size(); ++j)
            worst = std::max(worst, std::abs(probe[j] - q[j]));
    }
    return worst;
}

/// The deterministic minimum-distortion kernel as a full table: each stage
/// maps x_i to its cheapest letter.  Causal and strictly inside the
/// distortion constraint whenever the budget exceeds the floor.
inline std::vector<double> anchor_table(const OracleProblem& prob, const FiniteSource& src) {
    std::vector<std::size_t> best(src.x_alphabet);
    for (std::size_t x = 0; x < src.x_alphabet; ++x) {
        best[x] = 0;
        for (std::size_t y = 1; y < src.y_alphabet; ++y)
            if (src.distortion(x, y) < src.distortion(x, best[x])) best[x] = y;
    }
    std::vector<double> q(prob.x_paths * prob.y_paths, 0.0);
    for (std::size_t xp = 0; xp < prob.x_paths; ++xp) {
        std::size_t yp = 0;
        for (std::size_t i = 0; i < prob.horizon; ++i)
            yp = yp * src.y_alphabet + best[path_digit(xp, i, src.x_alphabet, prob.horizon)];
        q[xp * prob.y_paths + yp] = 1.0;
    }
    return q;
}

/// Dykstra's alternating projections onto the intersection of the
/// row-simplex product, the causality subspaces and the distortion
/// halfspace, followed by an exact feasibility restoration: rows are
/// clamped and renormalized, and any residual distortion excess is removed
/// by blending toward the anchor kernel (mixtures of causal kernels stay
/// causal).  Every returned table is therefore a genuine conditional
/// distribution meeting the budget.
inline void project_feasible(const OracleProblem& prob, const std::vector<double>& anchor,
                             std::vector<double>& q, std::size_t max_cycles = 400,
                             double tol = 1e-13) {
    const std::size_t sets = 2 + (prob.horizon - 1);
    std::vector<std::vector<double>> correction(sets,
                                                std::vector<double>(q.size(), 0.0));
    for (std::size_t cycle = 0; cycle < max_cycles; ++cycle) {
        double change = 0.0;
        std::size_t set_idx = 0;
        auto apply = [&](auto&& projector) {
            for (std::size_t j = 0; j < q.size(); ++j) q[j] += correction[set_idx][j];
            const std::vector<double> pre_proj = q;
            projector();
            for (std::size_t j = 0; j < q.size(); ++j) {
                const double corr = pre_proj[j] - q[j];
                change = std::max(change, std::abs(corr - correction[set_idx][j]));
                correction[set_idx][j] = corr;
            }
            ++set_idx;
        };
        apply([&] {
            for (std::size_t xp = 0; xp < prob.x_paths; ++xp)
                project_simplex(&q[xp * prob.y_paths], prob.y_paths);
        });
        for (std::size_t i = 0; i + 1 < prob.horizon; ++i)
            apply([&] { project_causality(prob, i, q); });
        apply([&] {
            double dot = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) dot += prob.weight[j] * q[j];
            if (dot > prob.budget && prob.weight_norm2 > 0.0) {
                const double scale = (dot - prob.budget) / prob.weight_norm2;
                for (std::size_t j = 0; j < q.size(); ++j) q[j] -= scale * prob.weight[j];
            }
        });
        if (change < tol && infeasibility(prob, q) < 1e-12) break;
    }

    // restoration: exact rows first, then the halfspace by blending
    for (std::size_t xp = 0; xp < prob.x_paths; ++xp) {
        double sum = 0.0;
        for (std::size_t yp = 0; yp < prob.y_paths; ++yp) {
            double& v = q[xp * prob.y_paths + yp];
            v = std::max(v, 0.0);
            sum += v;
        }
        if (sum <= 0.0) {
            for (std::size_t yp = 0; yp < prob.y_paths; ++yp)
                q[xp * prob.y_paths + yp] = 1.0 / static_cast<double>(prob.y_paths);
        } else {
            for (std::size_t yp = 0; yp < prob.y_paths; ++yp) q[xp * prob.y_paths + yp] /= sum;
        }
    }
    double dot = 0.0, dot_anchor = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        dot += prob.weight[j] * q[j];
        dot_anchor += prob.weight[j] * anchor[j];
    }
    if (dot > prob.budget && dot > dot_anchor) {
        const double theta = std::min(1.0, (dot - prob.budget) / (dot - dot_anchor));
        for (std::size_t j = 0; j < q.size(); ++j)
            q[j] = (1.0 - theta) * q[j] + theta * anchor[j];
    }
}

/// Mutual information of mu with a full conditional table, 0 ln 0 = 0.
inline double full_mutual_information(const OracleProblem& prob, const std::vector<double>& q) {
    thread_local std::vector<double> nu;
    nu.assign(prob.y_paths, 0.0);
    for (std::size_t xp = 0; xp < prob.x_paths; ++xp) {
        if (prob.mu[xp] == 0.0) continue;
        for (std::size_t yp = 0; yp < prob.y_paths; ++yp)
            nu[yp] += prob.mu[xp] * q[xp * prob.y_paths + yp];
    }
    double info = 0.0;
    for (std::size_t xp = 0; xp < prob.x_paths; ++xp) {
        if (prob.mu[xp] == 0.0) continue;
        for (std::size_t yp = 0; yp < prob.y_paths; ++yp) {
            const double v = q[xp * prob.y_paths + yp];
            if (v > 0.0 && nu[yp] > 0.0) info += prob.mu[xp] * v * std::log(v / nu[yp]);
        }
    }
    return std::max(info, 0.0);
}

} // namespace detail

struct OracleOptions {
    std::size_t restarts = 6;
    std::size_t max_iterations = 12000;
    std::uint64_t seed = 20240501;
};

/// Independent reference for the solver: minimizes I(X^n; Y^n) over causal
/// kernels meeting the per-letter distortion constraint, by projected
/// gradient descent on the full conditional table.  Limited to tiny
/// instances (alphabets <= 3, horizon <= 3).  Returns the per-letter rate
/// in nats; may be loose from above by the optimization tolerance.
inline double brute_force_oracle(const FiniteSource& src, double d_target,
                                 const OracleOptions& opts = {}) {
    src.check();
    if (src.x_alphabet > 3 || src.y_alphabet > 3 || src.horizon > 3)
        throw size_error("brute_force_oracle: instance too large for enumeration");
    if (!(d_target > src.min_achievable_distortion()))
        throw domain_error("brute_force_oracle: infeasible distortion target");

    detail::OracleProblem prob;
    prob.x_alpha = src.x_alphabet;
    prob.y_alpha = src.y_alphabet;
    prob.horizon = src.horizon;
    prob.x_paths = detail::ipow(src.x_alphabet, src.horizon);
    prob.y_paths = detail::ipow(src.y_alphabet, src.horizon);
    prob.mu = enumerate_paths(src, src.horizon - 1);
    prob.budget = d_target * static_cast<double>(src.horizon);
    prob.weight.assign(prob.x_paths * prob.y_paths, 0.0);
    for (std::size_t xp = 0; xp < prob.x_paths; ++xp) {
        if (prob.mu[xp] == 0.0) continue;
        for (std::size_t yp = 0; yp < prob.y_paths; ++yp) {
            double d = 0.0;
            for (std::size_t i = 0; i < src.horizon; ++i)
                d += src.distortion(path_digit(xp, i, src.x_alphabet, src.horizon),
                                    path_digit(yp, i, src.y_alphabet, src.horizon));
            prob.weight[xp * prob.y_paths + yp] = prob.mu[xp] * d;
        }
    }
    for (double w : prob.weight) prob.weight_norm2 += w * w;

    const std::vector<double> anchor = detail::anchor_table(prob, src);
    Rng rng(opts.seed);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t restart = 0; restart < opts.restarts; ++restart) {
        std::vector<double> q(prob.x_paths * prob.y_paths);
        for (double& v : q) v = 0.05 + rng.uniform();
        detail::project_feasible(prob, anchor, q);

        // momentum-accelerated projected descent with monotone acceptance
        // and restart-on-stall; every evaluated point is a projected table
        std::vector<double> q_prev = q;
        std::vector<double> probe, grad, trial, nu;
        double fval = detail::full_mutual_information(prob, q);
        double step = 1.0;
        double momentum = 1.0;
        std::size_t settled = 0;
        for (std::size_t it = 0; it < opts.max_iterations; ++it) {
            const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
            const double beta = (momentum - 1.0) / momentum_next;
            probe = q;
            for (std::size_t j = 0; j < q.size(); ++j) probe[j] += beta * (q[j] - q_prev[j]);

            nu.assign(prob.y_paths, 0.0);
            for (std::size_t xp = 0; xp < prob.x_paths; ++xp) {
                if (prob.mu[xp] == 0.0) continue;
                for (std::size_t yp = 0; yp < prob.y_paths; ++yp)
                    nu[yp] += prob.mu[xp] * probe[xp * prob.y_paths + yp];
            }
            grad.assign(q.size(), 0.0);
            for (std::size_t xp = 0; xp < prob.x_paths; ++xp) {
                if (prob.mu[xp] == 0.0) continue;
                for (std::size_t yp = 0; yp < prob.y_paths; ++yp) {
                    const double v = std::max(probe[xp * prob.y_paths + yp], 1e-12);
                    grad[xp * prob.y_paths + yp] =
                        prob.mu[xp] * std::log(v / std::max(nu[yp], 1e-300));
                }
            }
            bool accepted = false;
            for (int bt = 0; bt < 40 && !accepted; ++bt) {
                trial = probe;
                for (std::size_t j = 0; j < trial.size(); ++j) trial[j] -= step * grad[j];
                detail::project_feasible(prob, anchor, trial);
                const double ftrial = detail::full_mutual_information(prob, trial);
                if (ftrial <= fval + 1e-15) {
                    const double improvement = fval - ftrial;
                    q_prev.swap(q);
                    q.swap(trial);
                    fval = ftrial;
                    momentum = momentum_next;
                    step = std::min(step * 1.2, 4.0);
                    settled = improvement < 1e-14 ? settled + 1 : 0;
                    accepted = true;
                } else {
                    step *= 0.5;
                }
            }
            if (!accepted) {
                if (momentum == 1.0) break; // a plain projected step cannot improve
                momentum = 1.0;             // drop the extrapolation and retry
                q_prev = q;
                step = 1.0;
                continue;
            }
            if (settled > 60) break;
        }
        best = std::min(best, fval);
    }
    return best / static_cast<double>(src.horizon);
}

} // namespace nard
