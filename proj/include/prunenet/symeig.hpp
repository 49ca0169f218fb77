#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "prunenet/errors.hpp"
#include "prunenet/matrix.hpp"

namespace prunenet {

namespace detail {

// Householder reduction of a symmetric matrix to tridiagonal form, values
// only. On return d holds the diagonal and e the subdiagonal (e[0] unused).
// Works in-place on the lower triangle of a.
inline void tridiagonalize(Matrix<double>& a, std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = a.rows();
    d.assign(n, 0.0);
    e.assign(n, 0.0);
    for (std::size_t i = n - 1; i >= 1; --i) {
        const std::size_t l = i - 1;
        double h = 0.0;
        if (l > 0) {
            double scale = 0.0;
            for (std::size_t k = 0; k <= l; ++k) scale += std::fabs(a(i, k));
            if (scale == 0.0) {
                e[i] = a(i, l);
            } else {
                for (std::size_t k = 0; k <= l; ++k) {
                    a(i, k) /= scale;
                    h += a(i, k) * a(i, k);
                }
                double f = a(i, l);
                double g = (f >= 0.0) ? -std::sqrt(h) : std::sqrt(h);
                e[i] = scale * g;
                h -= f * g;
                a(i, l) = f - g;
                f = 0.0;
                for (std::size_t j = 0; j <= l; ++j) {
                    g = 0.0;
                    for (std::size_t k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
                    for (std::size_t k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
                    e[j] = g / h;
                    f += e[j] * a(i, j);
                }
                const double hh = f / (h + h);
                for (std::size_t j = 0; j <= l; ++j) {
                    f = a(i, j);
                    e[j] = g = e[j] - hh * f;
                    for (std::size_t k = 0; k <= j; ++k)
                        a(j, k) -= f * e[k] + g * a(i, k);
                }
            }
        } else {
            e[i] = a(i, l);
        }
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = a(i, i);
    e[0] = 0.0;
}

// Implicit QL with Wilkinson shifts on a tridiagonal (d, e); e[0] unused on
// entry. Eigenvalues land in d, unordered.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = d.size();
    if (n <= 1) return;
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t l = 0; l < n; ++l) {
        int iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) <= eps * dd) break;
            }
            if (m != l) {
                if (iter++ == 64)
                    throw DomainError("tridiagonal_ql: no convergence in 64 iterations");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                for (std::size_t i = m; i-- > l;) {
                    double f = s * e[i];
                    double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    if (i == l) {
                        d[l] -= p;
                        e[l] = g;
                        e[m] = 0.0;
                        break;
                    }
                }
            }
        } while (m != l);
    }
}

}  // namespace detail

// Eigenvalues of a symmetric matrix, ascending. The input is consumed.
inline std::vector<double> symmetric_eigenvalues(Matrix<double> a) {
    require(a.rows() == a.cols(), "symmetric_eigenvalues: matrix not square");
    require(!a.empty(), "symmetric_eigenvalues: empty matrix");
    const std::size_t n = a.rows();
    if (n == 1) return {a(0, 0)};
    std::vector<double> d, e;
    detail::tridiagonalize(a, d, e);
    detail::tridiagonal_ql(d, e);
    std::sort(d.begin(), d.end());
    return d;
}

}  // namespace prunenet
