#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace lrqk {

/**
 * Dense row-major matrix of doubles.
 *
 * Every matrix built from caller-supplied data is checked for shape and
 * finiteness. A single row (1 x d) is how token vectors such as q_t or k_hat
 * are represented throughout the library.
 */
class Matrix {
public:
    Matrix() = default;

    /// rows x cols of zeros.
    Matrix(std::size_t rows, std::size_t cols);

    /// Takes ownership of row-major data. Throws InvalidArgument on a length
    /// mismatch and NonFinite if any entry is NaN or Inf.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(std::span<const double> values);
    static Matrix row_vector(std::initializer_list<double> values) {
        return row_vector(std::span<const double>(values.begin(), values.size()));
    }

    std::size_t rows() const noexcept {
        return m_rows;
    }
    std::size_t cols() const noexcept {
        return m_cols;
    }
    std::size_t size() const noexcept {
        return m_data.size();
    }
    bool empty() const noexcept {
        return m_data.empty();
    }

    double& operator()(std::size_t i, std::size_t j) noexcept {
        return m_data[i * m_cols + j];
    }
    double operator()(std::size_t i, std::size_t j) const noexcept {
        return m_data[i * m_cols + j];
    }

    std::span<double> row(std::size_t i) noexcept {
        return {m_data.data() + i * m_cols, m_cols};
    }
    std::span<const double> row(std::size_t i) const noexcept {
        return {m_data.data() + i * m_cols, m_cols};
    }

    std::span<double> data() noexcept {
        return m_data;
    }
    std::span<const double> data() const noexcept {
        return m_data;
    }

    /// Appends one row; the matrix must be empty-with-cols or have matching cols.
    void append_row(std::span<const double> values);
    void reserve_rows(std::size_t rows);

    bool all_finite() const noexcept;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

}  // namespace lrqk
