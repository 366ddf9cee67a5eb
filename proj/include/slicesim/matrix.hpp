#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slicesim/errors.hpp"

namespace slicesim {

/// Small dense row-major matrix. The exact machinery only ever sees a few
/// thousand states, so no sparse or BLAS path is needed.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

    Matrix operator*(const Matrix& rhs) const {
        if (cols_ != rhs.rows_) throw std::invalid_argument("Matrix multiply: dimension mismatch");
        Matrix out(rows_, rhs.cols_);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* a = data_.data() + i * cols_;
            double* o = out.data_.data() + i * rhs.cols_;
            for (std::size_t k = 0; k < cols_; ++k) {
                const double aik = a[k];
                if (aik == 0.0) continue;
                const double* b = rhs.data_.data() + k * rhs.cols_;
                for (std::size_t j = 0; j < rhs.cols_; ++j) o[j] += aik * b[j];
            }
        }
        return out;
    }

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("max_abs_diff: dimension mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

/// v^T M for a row vector v.
inline std::vector<double> row_times_matrix(std::span<const double> v, const Matrix& m) {
    if (v.size() != m.rows()) throw std::invalid_argument("row_times_matrix: dimension mismatch");
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double vi = v[i];
        if (vi == 0.0) continue;
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += vi * r[j];
    }
    return out;
}

inline std::string format_double(double v, const char* fmt = "%.12g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

/// Row-major CSV with the state labels as both header and row keys.
inline void write_matrix_csv(std::ostream& os, const Matrix& m, std::span<const std::string> labels) {
    if (labels.size() != m.rows() || labels.size() != m.cols())
        throw std::invalid_argument("write_matrix_csv: label count mismatch");
    os << "state";
    for (const auto& l : labels) os << ',' << l;
    os << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        os << labels[i];
        for (std::size_t j = 0; j < m.cols(); ++j) os << ',' << format_double(m(i, j), "%.17g");
        os << '\n';
    }
}

} // namespace slicesim
