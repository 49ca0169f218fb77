#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "prunenet/errors.hpp"
#include "prunenet/matrix.hpp"
#include "prunenet/symeig.hpp"

namespace prunenet {

enum class GramMode { RowGram, ColGram };
enum class SpectrumKind { SingularValues, GramEigenvalues };

// Sorted spectrum of one weight matrix. Values are descending and clamped:
// anything below 1e-9 x max (including eigensolver round-off gone negative)
// is set to exactly 0.
struct SpectrumSummary {
    std::vector<double> values;
    std::size_t source_rows = 0;
    std::size_t source_cols = 0;
    SpectrumKind kind = SpectrumKind::GramEigenvalues;
};

namespace detail {

inline void clamp_spectrum(std::vector<double>& values) {
    std::sort(values.begin(), values.end(), std::greater<>());
    const double vmax = values.empty() ? 0.0 : std::max(values.front(), 0.0);
    const double tol = 1e-9 * vmax;
    for (double& v : values)
        if (v < tol) v = 0.0;
}

template <typename T>
Matrix<double> gram(const Matrix<T>& w, GramMode mode) {
    const std::size_t n = (mode == GramMode::RowGram) ? w.rows() : w.cols();
    Matrix<double> g(n, n);
    if (mode == GramMode::RowGram) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < w.cols(); ++k)
                    acc += double(w(i, k)) * double(w(j, k));
                g(i, j) = g(j, i) = acc;
            }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < w.rows(); ++k)
                    acc += double(w(k, i)) * double(w(k, j));
                g(i, j) = g(j, i) = acc;
            }
    }
    return g;
}

}  // namespace detail

template <typename T>
SpectrumSummary gram_eigenvalues(const Matrix<T>& w, GramMode mode) {
    require(!w.empty(), "gram_eigenvalues: empty matrix");
    require(all_finite(w), "gram_eigenvalues: non-finite entries");
    SpectrumSummary s;
    s.values = symmetric_eigenvalues(detail::gram(w, mode));
    s.source_rows = w.rows();
    s.source_cols = w.cols();
    s.kind = SpectrumKind::GramEigenvalues;
    detail::clamp_spectrum(s.values);
    return s;
}

// Square roots of the Gram eigenvalues taken on the smaller side, so the
// result always has min(rows, cols) entries.
template <typename T>
SpectrumSummary singular_values(const Matrix<T>& w) {
    const GramMode mode = (w.rows() <= w.cols()) ? GramMode::RowGram : GramMode::ColGram;
    SpectrumSummary s = gram_eigenvalues(w, mode);
    for (double& v : s.values) v = std::sqrt(v);
    s.kind = SpectrumKind::SingularValues;
    detail::clamp_spectrum(s.values);
    return s;
}

// Right-continuous empirical CDF over a sample.
struct Ecdf {
    std::vector<double> sorted_support;

    static Ecdf from_sample(std::span<const double> sample) {
        require(!sample.empty(), "Ecdf: empty sample");
        Ecdf e;
        e.sorted_support.assign(sample.begin(), sample.end());
        std::sort(e.sorted_support.begin(), e.sorted_support.end());
        return e;
    }

    std::size_t n() const { return sorted_support.size(); }

    double operator()(double x) const {
        auto it = std::upper_bound(sorted_support.begin(), sorted_support.end(), x);
        return double(it - sorted_support.begin()) / double(sorted_support.size());
    }
};

// Exact two-sample Kolmogorov-Smirnov statistic: scan the merged support and
// track the largest ECDF gap.
inline double ks_distance(std::span<const double> a, std::span<const double> b) {
    require(!a.empty() && !b.empty(), "ks_distance: empty sample");
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const double na = double(sa.size()), nb = double(sb.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < sa.size() || j < sb.size()) {
        const double x = (i < sa.size() && (j >= sb.size() || sa[i] <= sb[j])) ? sa[i] : sb[j];
        while (i < sa.size() && sa[i] == x) ++i;
        while (j < sb.size() && sb[j] == x) ++j;
        d = std::max(d, std::fabs(double(i) / na - double(j) / nb));
    }
    return d;
}

// Two-sample Anderson-Darling statistic, Scholz-Stephens right-continuous
// rank form over distinct pooled values (ties-aware); exactly 0 when the two
// empirical distributions coincide.
inline double ad_distance(std::span<const double> a, std::span<const double> b) {
    require(!a.empty() && !b.empty(), "ad_distance: empty sample");
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const std::size_t n1 = sa.size(), n2 = sb.size(), total = n1 + n2;
    std::vector<double> pooled(sa);
    pooled.insert(pooled.end(), sb.begin(), sb.end());
    std::sort(pooled.begin(), pooled.end());

    double stat = 0.0;
    std::size_t p = 0, i = 0, j = 0;
    while (p < total) {
        const double z = pooled[p];
        std::size_t run = p;
        while (run < total && pooled[run] == z) ++run;
        while (i < n1 && sa[i] <= z) ++i;
        while (j < n2 && sb[j] <= z) ++j;
        if (run == total) break;  // last distinct value excluded (N - B_j = 0)
        const double lj = double(run - p);
        const double bj = double(run);
        const double denom = bj * (double(total) - bj);
        const double t1 = double(total) * double(i) - double(n1) * bj;
        const double t2 = double(total) * double(j) - double(n2) * bj;
        stat += (lj / double(total)) * (t1 * t1 / double(n1) + t2 * t2 / double(n2)) / denom;
        p = run;
    }
    return stat;
}

// Numerical check that slicing shrinks the spectrum range: RowGram extremes of a
// row subset must stay inside the extremes of the full matrix.
struct RangeCheck {
    bool min_ok = false;
    bool max_ok = false;
    double min_margin = 0.0;  // min(sliced) - min(full)
    double max_margin = 0.0;  // max(full) - max(sliced)
};

template <typename T>
RangeCheck spectrum_range_check(const Matrix<T>& w, std::span<const std::size_t> kept_rows) {
    require(!kept_rows.empty(), "spectrum_range_check: empty kept set");
    for (std::size_t r : kept_rows)
        require(r < w.rows(), "spectrum_range_check: row index out of range");
    SpectrumSummary full = gram_eigenvalues(w, GramMode::RowGram);
    SpectrumSummary sliced = gram_eigenvalues(gather_rows(w, kept_rows), GramMode::RowGram);
    const double full_max = full.values.front();
    const double full_min = full.values.back();
    const double tol = 1e-8 * full_max;
    RangeCheck rc;
    rc.min_margin = sliced.values.back() - full_min;
    rc.max_margin = full_max - sliced.values.front();
    rc.min_ok = rc.min_margin >= -tol;
    rc.max_ok = rc.max_margin >= -tol;
    return rc;
}

}  // namespace prunenet
