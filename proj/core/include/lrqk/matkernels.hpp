#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lrqk/matrix.hpp"

namespace lrqk {

/// Relative diagonal jitter used when an SPD system turns out to be singular.
inline constexpr double kSpdJitter = 1e-10;

// Products. Shapes are checked; mismatches throw InvalidArgument.
Matrix matmul(const Matrix& a, const Matrix& b);     // A B
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // A^T B
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A B^T
Matrix transpose(const Matrix& a);

/// A^T A. The upper triangle is mirrored from the lower one, so the result is
/// exactly symmetric.
Matrix gram(const Matrix& a);

/// A A^T, mirrored like gram().
Matrix outer_gram(const Matrix& a);

/**
 * Right-solve X M = RHS for symmetric positive (semi)definite M (r x r) and
 * RHS (n x r), via Cholesky.
 *
 * If the factorization hits a non-positive pivot the system is treated as
 * singular and solved once more with M + eps * (trace(M)/r + 1) * I, eps =
 * kSpdJitter. Throws NonFinite on non-finite inputs, InvalidArgument on shape
 * errors or asymmetry beyond 1e-10 relative, SolveFailed if the jittered
 * factorization also fails.
 */
Matrix solve_spd(const Matrix& m, const Matrix& rhs);

double fro_norm_sq(const Matrix& a) noexcept;
double fro_norm(const Matrix& a) noexcept;
double trace(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);

/// Mean of squared elementwise differences; shapes must match.
double mean_squared_diff(const Matrix& a, const Matrix& b);

/// Rows of `a` at `indices`, in the given order.
Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices);

/// The first `count` rows of `a`.
Matrix head_rows(const Matrix& a, std::size_t count);

/**
 * Indices of the min(k, n) largest scores, returned in ascending index
 * order. Equal scores prefer the lower index. k must be >= 1.
 */
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k);

}  // namespace lrqk
