#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nard/errors.hpp"
#include "nard/matrix.hpp"
#include "nard/numerics.hpp"
#include "nard/rng.hpp"

namespace nard {

namespace detail {

/// In-place Householder reduction to upper Hessenberg form (similarity
/// transform; eigenvalues preserved, transforms not accumulated).
inline void to_hessenberg(Matrix& h) {
    const std::size_t n = h.rows;
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double norm2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) norm2 += h(i, k) * h(i, k);
        double alpha = std::sqrt(norm2);
        if (alpha == 0.0) continue;
        if (h(k + 1, k) > 0.0) alpha = -alpha;
        Vector v(n, 0.0);
        for (std::size_t i = k + 1; i < n; ++i) v[i] = h(i, k);
        v[k + 1] -= alpha;
        double vnorm2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 == 0.0) continue;
        const double beta = 2.0 / vnorm2;
        for (std::size_t j = 0; j < n; ++j) { // left: rows k+1..n-1
            double s = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) s += v[i] * h(i, j);
            s *= beta;
            for (std::size_t i = k + 1; i < n; ++i) h(i, j) -= s * v[i];
        }
        for (std::size_t i = 0; i < n; ++i) { // right: cols k+1..n-1
            double s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += h(i, j) * v[j];
            s *= beta;
            for (std::size_t j = k + 1; j < n; ++j) h(i, j) -= s * v[j];
        }
        h(k + 1, k) = alpha;
        for (std::size_t i = k + 2; i < n; ++i) h(i, k) = 0.0;
    }
}

/// All eigenvalues of a general real square matrix via the shifted
/// double-QR (Francis) iteration on the Hessenberg form.  Used for the
/// PBH mode tests; not part of the public linear-algebra surface.
inline std::vector<std::complex<double>> eigenvalues(Matrix a) {
    require(a.rows == a.cols && a.rows >= 1, "eigenvalues: matrix must be square and nonempty");
    const int n = static_cast<int>(a.rows);
    std::vector<std::complex<double>> eig(n);
    if (n == 1) {
        eig[0] = a(0, 0);
        return eig;
    }
    to_hessenberg(a);
    Matrix& h = a;
    const double eps = std::numeric_limits<double>::epsilon();
    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(h(i, j));
    if (anorm == 0.0) return eig;

    int nn = n - 1;
    double t = 0.0;
    while (nn >= 0) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l >= 1; --l) {
                double s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(h(l, l - 1)) <= eps * s) {
                    h(l, l - 1) = 0.0;
                    break;
                }
            }
            if (l < 0) l = 0;
            double x = h(nn, nn);
            if (l == nn) { // one real eigenvalue isolated
                eig[nn--] = x + t;
            } else {
                double y = h(nn - 1, nn - 1);
                double w = h(nn, nn - 1) * h(nn - 1, nn);
                if (l == nn - 1) { // a 2x2 block isolated
                    const double p = 0.5 * (y - x);
                    const double q = p * p + w;
                    double z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + (p >= 0.0 ? z : -z);
                        eig[nn - 1] = eig[nn] = x + z;
                        if (z != 0.0) eig[nn] = x - w / z;
                    } else {
                        eig[nn - 1] = std::complex<double>(x + p, z);
                        eig[nn] = std::complex<double>(x + p, -z);
                    }
                    nn -= 2;
                } else { // run one implicit double-shift QR sweep
                    if (its == 60)
                        throw convergence_error("eigenvalues: QR iteration cap exceeded",
                                                std::abs(h(nn, nn - 1)));
                    double p = 0.0, q = 0.0, r = 0.0, z = 0.0, s = 0.0;
                    if (its % 10 == 0 && its > 0) { // exceptional shift
                        t += x;
                        for (int i = 0; i <= nn; ++i) h(i, i) -= x;
                        s = std::abs(h(nn, nn - 1)) + std::abs(h(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    int m;
                    for (m = nn - 2; m >= l; --m) {
                        z = h(m, m);
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / h(m + 1, m) + h(m, m + 1);
                        q = h(m + 1, m + 1) - z - r - s;
                        r = h(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const double u = std::abs(h(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const double v = std::abs(p) * (std::abs(h(m - 1, m - 1)) + std::abs(z) +
                                                        std::abs(h(m + 1, m + 1)));
                        if (u <= eps * v) break;
                    }
                    for (int i = m + 2; i <= nn; ++i) {
                        h(i, i - 2) = 0.0;
                        if (i > m + 2) h(i, i - 3) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = h(k, k - 1);
                            q = h(k + 1, k - 1);
                            r = (k + 1 != nn) ? h(k + 2, k - 1) : 0.0;
                            x = std::abs(p) + std::abs(q) + std::abs(r);
                            if (x != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        const double smag = std::sqrt(p * p + q * q + r * r);
                        s = (p >= 0.0 ? smag : -smag);
                        if (s == 0.0) continue;
                        if (k == m) {
                            if (l != m) h(k, k - 1) = -h(k, k - 1);
                        } else {
                            h(k, k - 1) = -s * x;
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for (int j = k; j <= nn; ++j) { // row update
                            double pp = h(k, j) + q * h(k + 1, j);
                            if (k + 1 != nn) {
                                pp += r * h(k + 2, j);
                                h(k + 2, j) -= pp * z;
                            }
                            h(k + 1, j) -= pp * y;
                            h(k, j) -= pp * x;
                        }
                        const int mmin = (nn < k + 3) ? nn : k + 3;
                        for (int i = l; i <= mmin; ++i) { // column update
                            double pp = x * h(i, k) + y * h(i, k + 1);
                            if (k + 1 != nn) {
                                pp += z * h(i, k + 2);
                                h(i, k + 2) -= pp * r;
                            }
                            h(i, k + 1) -= pp * q;
                            h(i, k) -= pp;
                        }
                    }
                }
            }
        } while (l < nn - 1);
    }
    return eig;
}

/// Numeric rank by Householder QR with column pivoting; diagonal entries of
/// R below rel_tol times the largest are treated as zero.
inline std::size_t rank(Matrix a, double rel_tol = 1e-9) {
    const std::size_t m = a.rows, n = a.cols;
    const std::size_t steps = std::min(m, n);
    double first_diag = 0.0;
    std::size_t r = 0;
    for (std::size_t k = 0; k < steps; ++k) {
        // pivot: remaining column with the largest norm
        std::size_t piv = k;
        double best = -1.0;
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += a(i, j) * a(i, j);
            if (s > best) {
                best = s;
                piv = j;
            }
        }
        if (piv != k)
            for (std::size_t i = 0; i < m; ++i) std::swap(a(i, k), a(i, piv));
        double alpha = std::sqrt(std::max(best, 0.0));
        if (k == 0) first_diag = alpha;
        if (alpha <= rel_tol * first_diag || alpha == 0.0) break;
        ++r;
        if (a(k, k) > 0.0) alpha = -alpha;
        Vector v(m, 0.0);
        for (std::size_t i = k; i < m; ++i) v[i] = a(i, k);
        v[k] -= alpha;
        double vnorm2 = 0.0;
        for (std::size_t i = k; i < m; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 == 0.0) continue;
        const double beta = 2.0 / vnorm2;
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i] * a(i, j);
            s *= beta;
            for (std::size_t i = k; i < m; ++i) a(i, j) -= s * v[i];
        }
    }
    return r;
}

/// Rank of the complex matrix Re + i*Im via the real embedding
/// [[Re, -Im], [Im, Re]], whose real rank is exactly twice the complex one.
inline std::size_t rank_complex(const Matrix& re, const Matrix& im, double rel_tol = 1e-9) {
    require(re.rows == im.rows && re.cols == im.cols, "rank_complex: shape mismatch");
    Matrix e(2 * re.rows, 2 * re.cols);
    for (std::size_t i = 0; i < re.rows; ++i)
        for (std::size_t j = 0; j < re.cols; ++j) {
            e(i, j) = re(i, j);
            e(i, j + re.cols) = -im(i, j);
            e(i + re.rows, j) = im(i, j);
            e(i + re.rows, j + re.cols) = re(i, j);
        }
    return rank(std::move(e), rel_tol) / 2;
}

} // namespace detail

/// Partially observed linear system
///   X_{t+1} = A X_t + B W_t,   Y_t = C X_t + N V_t
/// with W, V independent standard normal vectors and X_0 ~ N(x0_mean, x0_cov).
/// Any process/observation noise shaping must be folded into B and N.
struct GaussMarkovSource {
    Matrix A;       // m x m state transition
    Matrix B;       // m x k process-noise input
    Matrix C;       // p x m observation map
    Matrix N;       // p x d observation-noise input
    Vector x0_mean; // m
    Matrix x0_cov;  // m x m, PSD

    std::size_t state_dim() const { return A.rows; }
    std::size_t obs_dim() const { return C.rows; }

    void check_shapes() const {
        require(A.rows == A.cols && A.rows >= 1, "source: A must be square");
        require(B.rows == A.rows && B.cols >= 1, "source: B row count must match A");
        require(C.cols == A.rows && C.rows >= 1, "source: C column count must match A");
        require(N.rows == C.rows && N.cols >= 1, "source: N row count must match C");
        require(x0_mean.size() == A.rows, "source: x0_mean length must match A");
        require(x0_cov.rows == A.rows && x0_cov.cols == A.rows, "source: x0_cov must be m x m");
        require(all_finite(A) && all_finite(B) && all_finite(C) && all_finite(N) &&
                    all_finite(x0_mean) && all_finite(x0_cov),
                "source: matrices must be finite");
    }
};

/// One PBH rank test at an eigenvalue of A with modulus >= 1.
struct ModeCheck {
    std::complex<double> eigenvalue;
    double modulus = 0.0;
    bool detectable = false;   // rank [A - eig*I; C] = m
    bool stabilizable = false; // rank [A - eig*I, sqrt(B*Bᵀ)] = m
};

struct ValidationReport {
    std::vector<ModeCheck> unstable_modes;
    bool noise_cov_pd = false; // N*Nᵀ positive definite
    bool x0_cov_psd = false;
    bool detectable = false;
    bool stabilizable = false;
    bool pass = false;

    std::string summary() const {
        std::ostringstream os;
        os << "detectable: " << (detectable ? "yes" : "no")
           << ", stabilizable: " << (stabilizable ? "yes" : "no")
           << ", observation noise PD: " << (noise_cov_pd ? "yes" : "no")
           << ", x0 covariance PSD: " << (x0_cov_psd ? "yes" : "no") << "\n";
        if (unstable_modes.empty()) {
            os << "no eigenvalues of modulus >= 1\n";
        } else {
            for (const auto& mode : unstable_modes) {
                os << "mode " << mode.eigenvalue.real();
                if (mode.eigenvalue.imag() != 0.0) os << (mode.eigenvalue.imag() < 0 ? "" : "+") << mode.eigenvalue.imag() << "i";
                os << " (|.|=" << mode.modulus << "): detectable " << (mode.detectable ? "yes" : "no")
                   << ", stabilizable " << (mode.stabilizable ? "yes" : "no") << "\n";
            }
        }
        os << "result: " << (pass ? "pass" : "fail") << "\n";
        return os.str();
    }
};

/// PBH rank tests on every eigenvalue of A with modulus >= 1, plus the
/// positive-definiteness checks on N*Nᵀ and x0_cov.
inline ValidationReport validate(const GaussMarkovSource& src, double rank_tol = 1e-9) {
    src.check_shapes();
    ValidationReport rep;
    const std::size_t m = src.state_dim();

    const Matrix nnt = src.N * transpose(src.N);
    const SymEig nnt_eig = sym_eig(symmetrize(nnt));
    rep.noise_cov_pd = nnt_eig.values.back() > 1e-12 * std::max(nnt_eig.values.front(), 1e-300);
    rep.x0_cov_psd = is_psd(symmetrize(src.x0_cov), 1e-10 * std::max(max_abs(src.x0_cov), 1.0));

    const Matrix bbt_root = sqrt_psd(symmetrize(src.B * transpose(src.B)));
    const auto eigs = detail::eigenvalues(src.A);

    rep.detectable = true;
    rep.stabilizable = true;
    for (const auto& lam : eigs) {
        const double mod = std::abs(lam);
        if (mod < 1.0 - 1e-9) continue;
        ModeCheck mode;
        mode.eigenvalue = lam;
        mode.modulus = mod;

        // detectability: [A - lam I; C] full column rank (complex)
        Matrix re((m + src.obs_dim()), m), im((m + src.obs_dim()), m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                re(i, j) = src.A(i, j) - (i == j ? lam.real() : 0.0);
                im(i, j) = (i == j ? -lam.imag() : 0.0);
            }
        for (std::size_t i = 0; i < src.obs_dim(); ++i)
            for (std::size_t j = 0; j < m; ++j) re(m + i, j) = src.C(i, j);
        mode.detectable = detail::rank_complex(re, im, rank_tol) == m;

        // stabilizability: [A - lam I, sqrt(BBᵀ)] full row rank (complex)
        Matrix re2(m, 2 * m), im2(m, 2 * m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                re2(i, j) = src.A(i, j) - (i == j ? lam.real() : 0.0);
                im2(i, j) = (i == j ? -lam.imag() : 0.0);
                re2(i, m + j) = bbt_root(i, j);
            }
        mode.stabilizable = detail::rank_complex(re2, im2, rank_tol) == m;

        rep.detectable = rep.detectable && mode.detectable;
        rep.stabilizable = rep.stabilizable && mode.stabilizable;
        rep.unstable_modes.push_back(mode);
    }
    rep.pass = rep.detectable && rep.stabilizable && rep.noise_cov_pd && rep.x0_cov_psd;
    return rep;
}

struct Trajectory {
    std::vector<Vector> states;       // T entries, each of length m
    std::vector<Vector> observations; // T entries, each of length p
};

/// Sample a length-T trajectory.  Draw order per run: X_0 first, then for
/// each step t the observation noise V_t followed by the process noise W_t,
/// so a fixed seed reproduces the trajectory exactly.
inline Trajectory simulate_source(const GaussMarkovSource& src, std::size_t T, Rng& rng) {
    src.check_shapes();
    require(T >= 1, "simulate_source: T must be >= 1");
    const Matrix x0_root = sqrt_psd(symmetrize(src.x0_cov));
    const std::size_t k = src.B.cols;
    const std::size_t d = src.N.cols;

    Trajectory out;
    out.states.reserve(T);
    out.observations.reserve(T);
    Vector x = gaussian_sample(rng, src.x0_mean, x0_root);
    for (std::size_t t = 0; t < T; ++t) {
        Vector v(d);
        for (double& z : v) z = rng.normal();
        Vector y = src.C * x + src.N * v;
        out.states.push_back(x);
        out.observations.push_back(std::move(y));
        Vector w(k);
        for (double& z : w) z = rng.normal();
        x = src.A * x + src.B * w;
    }
    return out;
}

/// Finite-alphabet stationary first-order Markov source with a single-letter
/// distortion table, over a horizon of n+1 stages.
struct FiniteSource {
    std::size_t x_alphabet = 0;
    std::size_t y_alphabet = 0;
    std::size_t horizon = 0; // number of stages, n+1
    Vector initial_pmf;      // |X|
    Matrix transition;       // |X| x |X|, row x is P(next | current = x)
    Matrix distortion;       // |X| x |Y|, entries >= 0

    void check() const {
        require(x_alphabet >= 1 && y_alphabet >= 1 && horizon >= 1,
                "finite source: alphabets and horizon must be positive");
        require(initial_pmf.size() == x_alphabet, "finite source: initial_pmf length");
        require(transition.rows == x_alphabet && transition.cols == x_alphabet,
                "finite source: transition must be |X| x |X|");
        require(distortion.rows == x_alphabet && distortion.cols == y_alphabet,
                "finite source: distortion must be |X| x |Y|");
        auto check_pmf = [](const double* p, std::size_t len, const char* what) {
            double sum = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                if (!(p[i] >= 0.0))
                    throw precondition_error(std::string(what) + ": negative probability");
                sum += p[i];
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw precondition_error(std::string(what) + ": probabilities must sum to 1");
        };
        check_pmf(initial_pmf.data(), x_alphabet, "finite source initial pmf");
        for (std::size_t x = 0; x < x_alphabet; ++x)
            check_pmf(&transition.data[x * x_alphabet], x_alphabet, "finite source transition row");
        for (double v : distortion.data)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw precondition_error("finite source: distortion entries must be finite and >= 0");
    }

    /// Marginal law of X_i, i.e. initial_pmf · transition^i.
    Vector marginal(std::size_t i) const {
        Vector p = initial_pmf;
        for (std::size_t step = 0; step < i; ++step) {
            Vector next(x_alphabet, 0.0);
            for (std::size_t a = 0; a < x_alphabet; ++a)
                for (std::size_t b = 0; b < x_alphabet; ++b) next[b] += p[a] * transition(a, b);
            p = std::move(next);
        }
        return p;
    }

    /// Per-letter distortion floor: each x_i mapped to its best letter.
    double min_achievable_distortion() const {
        double total = 0.0;
        for (std::size_t i = 0; i < horizon; ++i) {
            const Vector p = marginal(i);
            for (std::size_t x = 0; x < x_alphabet; ++x) {
                double best = distortion(x, 0);
                for (std::size_t y = 1; y < y_alphabet; ++y) best = std::min(best, distortion(x, y));
                total += p[x] * best;
            }
        }
        return total / static_cast<double>(horizon);
    }

    /// Per-letter distortion of the best reconstruction that ignores the
    /// source entirely (one fixed letter per stage); the zero-rate point.
    double zero_rate_distortion() const {
        double total = 0.0;
        for (std::size_t i = 0; i < horizon; ++i) {
            const Vector p = marginal(i);
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t y = 0; y < y_alphabet; ++y) {
                double avg = 0.0;
                for (std::size_t x = 0; x < x_alphabet; ++x) avg += p[x] * distortion(x, y);
                best = std::min(best, avg);
            }
            total += best;
        }
        return total / static_cast<double>(horizon);
    }
};

inline constexpr std::size_t default_path_cap = 100000;

/// p^e for small path-index arithmetic, guarding against overflow of the cap.
inline std::size_t checked_pow(std::size_t base, std::size_t exp, std::size_t cap) {
    std::size_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        if (r > cap / std::max<std::size_t>(base, 1)) throw size_error("path count exceeds cap");
        r *= base;
    }
    return r;
}

/// Digit at position pos (0 = first symbol) of a lexicographic path index.
inline std::size_t path_digit(std::size_t index, std::size_t pos, std::size_t alphabet,
                              std::size_t length) {
    std::size_t div = 1;
    for (std::size_t i = pos + 1; i < length; ++i) div *= alphabet;
    return (index / div) % alphabet;
}

/// Probabilities of all paths x^i = (x_0, ..., x_i) in lexicographic order
/// (x_0 most significant digit).  Throws size_error past the cap.
inline std::vector<double> enumerate_paths(const FiniteSource& src, std::size_t i,
                                           std::size_t cap = default_path_cap) {
    src.check();
    require(i < src.horizon, "enumerate_paths: stage outside horizon");
    const std::size_t count = checked_pow(src.x_alphabet, i + 1, cap);
    std::vector<double> prob(count);
    for (std::size_t idx = 0; idx < count; ++idx) {
        std::size_t prev = path_digit(idx, 0, src.x_alphabet, i + 1);
        double p = src.initial_pmf[prev];
        for (std::size_t pos = 1; pos <= i && p > 0.0; ++pos) {
            const std::size_t cur = path_digit(idx, pos, src.x_alphabet, i + 1);
            p *= src.transition(prev, cur);
            prev = cur;
        }
        prob[idx] = p;
    }
    return prob;
}

} // namespace nard
