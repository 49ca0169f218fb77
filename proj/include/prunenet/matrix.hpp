#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "prunenet/errors.hpp"

namespace prunenet {

// Dense row-major matrix. Weights are Matrix<float>; policy/eigen work uses
// Matrix<double>.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t i = 0;
        for (const auto& r : rows) {
            require(r.size() == m.cols_, "Matrix::from_rows: ragged rows");
            std::size_t j = 0;
            for (T v : r) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<T> data_;
};

// y = A x, double accumulation regardless of element types.
template <typename TA, typename TX>
std::vector<double> matvec(const Matrix<TA>& a, std::span<const TX> x) {
    require(a.cols() == x.size(), "matvec: dimension mismatch");
    std::vector<double> y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) acc += double(r[j]) * double(x[j]);
        y[i] = acc;
    }
    return y;
}

// y = A^T x.
template <typename TA, typename TX>
std::vector<double> matvec_t(const Matrix<TA>& a, std::span<const TX> x) {
    require(a.rows() == x.size(), "matvec_t: dimension mismatch");
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        double xi = double(x[i]);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += double(r[j]) * xi;
    }
    return y;
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& a, std::span<const std::size_t> idx) {
    Matrix<T> out(idx.size(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] < a.rows(), "gather_rows: index out of range");
        auto src = a.row(idx[i]);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) dst[j] = src[j];
    }
    return out;
}

template <typename T>
Matrix<T> gather_cols(const Matrix<T>& a, std::span<const std::size_t> idx) {
    Matrix<T> out(a.rows(), idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j)
        require(idx[j] < a.cols(), "gather_cols: index out of range");
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto src = a.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < idx.size(); ++j) dst[j] = src[idx[j]];
    }
    return out;
}

template <typename T>
bool all_finite(const Matrix<T>& a) {
    for (T v : a.data())
        if (!std::isfinite(double(v))) return false;
    return true;
}

}  // namespace prunenet
