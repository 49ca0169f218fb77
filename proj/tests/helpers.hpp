#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "prunenet/matrix.hpp"
#include "prunenet/rng.hpp"

namespace testutil {

inline prunenet::Matrix<float> random_matrix(std::size_t rows, std::size_t cols,
                                             prunenet::Rng& rng, double scale = 1.0) {
    prunenet::Matrix<float> m(rows, cols);
    for (float& v : m.data()) v = float(scale * rng.gaussian());
    return m;
}

inline prunenet::Matrix<double> random_matrix_d(std::size_t rows, std::size_t cols,
                                                prunenet::Rng& rng, double scale = 1.0) {
    prunenet::Matrix<double> m(rows, cols);
    for (double& v : m.data()) v = scale * rng.gaussian();
    return m;
}

inline std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, prunenet::Rng& rng) {
    std::set<std::size_t> s;
    while (s.size() < k) s.insert(std::size_t(rng.below(n)));
    return {s.begin(), s.end()};
}

// Brute-force two-sample KS: evaluate both ECDFs by direct counting at every
// merged support point. O(n*m); independent of the merge-scan implementation.
inline double ks_bruteforce(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> merged(a);
    merged.insert(merged.end(), b.begin(), b.end());
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    double d = 0.0;
    for (double x : merged) {
        std::size_t ca = 0, cb = 0;
        for (double v : a) ca += (v <= x) ? 1 : 0;
        for (double v : b) cb += (v <= x) ? 1 : 0;
        d = std::max(d, std::fabs(double(ca) / double(a.size()) - double(cb) / double(b.size())));
    }
    return d;
}

// Textbook two-sample Anderson-Darling via direct ECDF evaluation over
// distinct pooled values (algebraically equal to the rank-counting form).
inline double ad_bruteforce(const std::vector<double>& a, const std::vector<double>& b) {
    const double n1 = double(a.size()), n2 = double(b.size());
    const double total = n1 + n2;
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> distinct(pooled);
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    double stat = 0.0;
    for (std::size_t j = 0; j + 1 < distinct.size(); ++j) {
        const double z = distinct[j];
        double l = 0.0, f1 = 0.0, f2 = 0.0;
        for (double v : pooled) l += (v == z) ? 1.0 : 0.0;
        for (double v : a) f1 += (v <= z) ? 1.0 : 0.0;
        for (double v : b) f2 += (v <= z) ? 1.0 : 0.0;
        f1 /= n1;
        f2 /= n2;
        double h = 0.0;
        for (double v : pooled) h += (v <= z) ? 1.0 : 0.0;
        h /= total;
        stat += (l / total) * (n1 * (f1 - h) * (f1 - h) + n2 * (f2 - h) * (f2 - h)) /
                (h * (1.0 - h));
    }
    return stat;
}

// Roots of det(A - lambda I) for a symmetric 3x3 matrix by sign-scan plus
// bisection on the cubic; independent of the tridiagonal/QL path.
inline std::vector<double> charpoly_eigenvalues_3x3(const prunenet::Matrix<double>& a) {
    const double tr = a(0, 0) + a(1, 1) + a(2, 2);
    const double m2 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) -
                      a(0, 2) * a(2, 0) + a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
    const double det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                       a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                       a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    auto p = [&](double x) { return ((-x + tr) * x - m2) * x + det; };

    double radius = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 3; ++j) row += std::fabs(a(i, j));
        radius = std::max(radius, row);
    }
    const double lo = -radius - 1.0, hi = radius + 1.0;
    const int grid = 200000;
    std::vector<double> roots;
    double prev_x = lo, prev_v = p(lo);
    for (int g = 1; g <= grid && roots.size() < 3; ++g) {
        const double x = lo + (hi - lo) * double(g) / double(grid);
        const double v = p(x);
        if (v == 0.0) {
            roots.push_back(x);
        } else if ((prev_v < 0.0) != (v < 0.0)) {
            double a0 = prev_x, b0 = x, va = prev_v;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (a0 + b0);
                const double vm = p(mid);
                if ((va < 0.0) == (vm < 0.0)) {
                    a0 = mid;
                    va = vm;
                } else {
                    b0 = mid;
                }
            }
            roots.push_back(0.5 * (a0 + b0));
        }
        prev_x = x;
        prev_v = v;
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
    return read_file(a) == read_file(b);
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("prunenet_test_" + tag + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
