#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "nard/errors.hpp"
#include "nard/matrix.hpp"
#include "nard/rng.hpp"

namespace nard {

struct SymEig {
    Matrix vectors; // orthogonal; column j is the eigenvector of values[j]
    Vector values;  // descending
};

namespace defaults {
inline constexpr double eig_tol = 1e-12;        // relative to max|S|
inline constexpr int eig_max_sweeps = 100;
inline constexpr double bisect_tol = 1e-12;     // absolute bracket width
inline constexpr int bisect_max_iter = 200;
} // namespace defaults

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns (E, lambda) with Eᵀ·S·E = diag(lambda), E·Eᵀ = I and lambda in
/// descending order.  Column signs follow a fixed convention (the largest-
/// magnitude entry of each eigenvector is made positive) so the result is
/// reproducible across runs.
///
/// Sweeps stop once every off-diagonal entry is below tol·max|S|; exceeding
/// max_sweeps throws convergence_error.
inline SymEig sym_eig(const Matrix& s, double tol = defaults::eig_tol,
                      int max_sweeps = defaults::eig_max_sweeps) {
    require(s.rows == s.cols && s.rows >= 1, "sym_eig: matrix must be square and nonempty");
    if (!is_symmetric(s, tol)) throw precondition_error("sym_eig: matrix is not symmetric within tol");

    const std::size_t n = s.rows;
    Matrix w = symmetrize(s);
    Matrix v = Matrix::identity(n);
    const double scale = max_abs(w);
    const double thresh = tol * std::max(scale, 1e-300);

    auto off_diag_max = [&]() {
        double m = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) m = std::max(m, std::abs(w(p, q)));
        return m;
    };

    bool done = (n == 1) || (scale == 0.0) || (off_diag_max() <= thresh);
    for (int sweep = 0; !done && sweep < max_sweeps; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = w(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                // classic Rutishauser rotation annihilating w(p,q)
                const double theta = (w(q, q) - w(p, p)) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e150) {
                    t = 0.5 / theta;
                } else {
                    t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                    if (theta < 0.0) t = -t;
                }
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * c;
                const double tau = sn / (1.0 + c);
                const double h = t * apq;
                w(p, p) -= h;
                w(q, q) += h;
                w(p, q) = 0.0;
                w(q, p) = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == p || j == q) continue;
                    const double wjp = w(j, p), wjq = w(j, q);
                    w(j, p) = wjp - sn * (wjq + tau * wjp);
                    w(j, q) = wjq + sn * (wjp - tau * wjq);
                    w(p, j) = w(j, p);
                    w(q, j) = w(j, q);
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const double vjp = v(j, p), vjq = v(j, q);
                    v(j, p) = vjp - sn * (vjq + tau * vjp);
                    v(j, q) = vjq + sn * (vjp - tau * vjq);
                }
            }
        }
        done = off_diag_max() <= thresh;
    }
    if (!done) throw convergence_error("sym_eig: Jacobi sweeps did not converge", off_diag_max());

    // descending eigenvalue order, columns permuted along
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return w(a, a) > w(b, b); });

    SymEig out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.values[j] = w(src, src);
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = std::abs(v(i, src));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = sign * v(i, src);
    }
    return out;
}

/// Root of a sign-changing function by bisection.
///
/// The bracket [lo, hi] must satisfy f(lo)·f(hi) ≤ 0.  Iterates until the
/// bracket width is at most tol (or an exact zero is hit), so the result
/// depends only on the sign pattern of f, not on its magnitudes.
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double tol = defaults::bisect_tol,
                     int max_iter = defaults::bisect_max_iter) {
    require(lo < hi, "bisect: requires lo < hi");
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw precondition_error("bisect: f(lo) and f(hi) have the same sign");

    for (int it = 0; it < max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= tol) return mid;
        const double fmid = f(mid);
        if (fmid == 0.0) return mid;
        if ((fmid > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    if (hi - lo <= tol) return 0.5 * (lo + hi);
    throw convergence_error("bisect: iteration cap exceeded", hi - lo);
}

/// True iff every eigenvalue of the symmetric matrix s is >= -tol.
inline bool is_psd(const Matrix& s, double tol) {
    if (!is_symmetric(s, std::max(tol, defaults::eig_tol)))
        throw precondition_error("is_psd: matrix is not symmetric within tol");
    const SymEig eig = sym_eig(s);
    for (double v : eig.values)
        if (v < -tol) return false;
    return true;
}

/// mean + cov_sqrt · ζ with ζ a vector of independent standard normals
/// drawn from rng.  cov_sqrt may be rectangular (rows = len(mean)).
inline Vector gaussian_sample(Rng& rng, const Vector& mean, const Matrix& cov_sqrt) {
    require(cov_sqrt.rows == mean.size(), "gaussian_sample: cov_sqrt rows must match mean length");
    Vector zeta(cov_sqrt.cols);
    for (double& z : zeta) z = rng.normal();
    Vector out = mean;
    for (std::size_t i = 0; i < cov_sqrt.rows; ++i)
        for (std::size_t j = 0; j < cov_sqrt.cols; ++j) out[i] += cov_sqrt(i, j) * zeta[j];
    return out;
}

/// Symmetric square root of a PSD matrix (eigenvalues clamped at zero).
inline Matrix sqrt_psd(const Matrix& s, double tol = 1e-10) {
    const SymEig eig = sym_eig(s);
    const double scale = std::max(max_abs(eig.values), 1.0);
    Vector root(eig.values.size());
    for (std::size_t i = 0; i < root.size(); ++i) {
        if (eig.values[i] < -tol * scale)
            throw precondition_error("sqrt_psd: matrix has a significantly negative eigenvalue");
        root[i] = std::sqrt(std::max(eig.values[i], 0.0));
    }
    return eig.vectors * Matrix::diagonal(root) * transpose(eig.vectors);
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.  Eigenvalues
/// below rel_tol times the largest are treated as exact zeros.
inline Matrix pinv_psd(const Matrix& s, double rel_tol = 1e-12) {
    const SymEig eig = sym_eig(s);
    double lam_max = 0.0;
    for (double v : eig.values) lam_max = std::max(lam_max, std::abs(v));
    const double cut = rel_tol * std::max(lam_max, 1e-300);
    Vector inv(eig.values.size(), 0.0);
    for (std::size_t i = 0; i < inv.size(); ++i)
        if (eig.values[i] > cut) inv[i] = 1.0 / eig.values[i];
    return eig.vectors * Matrix::diagonal(inv) * transpose(eig.vectors);
}

} // namespace nard
