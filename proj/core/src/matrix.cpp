#include "lrqk/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrqk/error.hpp"

namespace lrqk {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument:
        return "InvalidArgument";
    case ErrorCode::NonFinite:
        return "NonFinite";
    case ErrorCode::SolveFailed:
        return "SolveFailed";
    case ErrorCode::RankTooLarge:
        return "RankTooLarge";
    case ErrorCode::IndexOutOfRange:
        return "IndexOutOfRange";
    case ErrorCode::Undefined:
        return "Undefined";
    case ErrorCode::EmptyKeys:
        return "EmptyKeys";
    case ErrorCode::WindowTooLarge:
        return "WindowTooLarge";
    case ErrorCode::CorruptTrace:
        return "CorruptTrace";
    case ErrorCode::UnsupportedVersion:
        return "UnsupportedVersion";
    case ErrorCode::Io:
        return "Io";
    }
    return "Unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : m_rows(rows), m_cols(cols), m_data(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
    if (m_data.size() != rows * cols) {
        throw Error(ErrorCode::InvalidArgument,
                    "matrix data length " + std::to_string(m_data.size()) + " != " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    }
    if (!all_finite()) {
        throw Error(ErrorCode::NonFinite, "matrix constructed with non-finite entries");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw Error(ErrorCode::InvalidArgument, "ragged initializer for Matrix");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::append_row(std::span<const double> values) {
    if (values.size() != m_cols) {
        throw Error(ErrorCode::InvalidArgument,
                    "append_row: got " + std::to_string(values.size()) + " values for " + std::to_string(m_cols) +
                        " columns");
    }
    m_data.insert(m_data.end(), values.begin(), values.end());
    ++m_rows;
}

void Matrix::reserve_rows(std::size_t rows) {
    m_data.reserve(rows * m_cols);
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(m_data.begin(), m_data.end(), [](double x) { return std::isfinite(x); });
}

static void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorCode::InvalidArgument, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                                                    "x" + std::to_string(a.cols()) + " vs " +
                                                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < m_data.size(); ++i) {
        m_data[i] += other.m_data[i];
    }
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < m_data.size(); ++i) {
        m_data[i] -= other.m_data[i];
    }
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& x : m_data) {
        x *= s;
    }
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) {
    a += b;
    return a;
}

Matrix operator-(Matrix a, const Matrix& b) {
    a -= b;
    return a;
}

Matrix operator*(Matrix a, double s) {
    a *= s;
    return a;
}

Matrix operator*(double s, Matrix a) {
    a *= s;
    return a;
}

}  // namespace lrqk
