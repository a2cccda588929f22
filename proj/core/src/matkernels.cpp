#include "lrqk/matkernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lrqk/error.hpp"

namespace lrqk {

namespace {

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
    if (!ok) {
        throw Error(ErrorCode::InvalidArgument, std::string(op) + ": incompatible shapes " + shape(a) + " and " +
                                                    shape(b));
    }
}

// In-place lower Cholesky factor of an n x n row-major matrix. Returns false on
// a pivot that is not safely positive.
bool cholesky_in_place(std::vector<double>& l, std::size_t n, double pivot_floor) {
    for (std::size_t j = 0; j < n; ++j) {
        double diag = l[j * n + j];
        for (std::size_t k = 0; k < j; ++k) {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if (!(diag > pivot_floor)) {
            return false;
        }
        const double ljj = std::sqrt(diag);
        l[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = l[i * n + j];
            for (std::size_t k = 0; k < j; ++k) {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    return true;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul", a, b);
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        const auto ai = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            if (aik == 0.0) {
                continue;
            }
            const double* bk = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += aik * bk[j];
            }
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto ak = a.row(k);
        const double* bk = b.row(k).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) {
                continue;
            }
            double* ci = c.row(i).data();
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += aki * bk[j];
            }
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            c(i, j) = dot(ai, b.row(j));
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

Matrix gram(const Matrix& a) {
    const std::size_t n = a.cols();
    Matrix g(n, n);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto ak = a.row(k);
        for (std::size_t i = 0; i < n; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) {
                continue;
            }
            double* gi = g.row(i).data();
            for (std::size_t j = 0; j <= i; ++j) {
                gi[j] += aki * ak[j];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            g(i, j) = g(j, i);
        }
    }
    return g;
}

Matrix outer_gram(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = dot(a.row(i), a.row(j));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

Matrix solve_spd(const Matrix& m, const Matrix& rhs) {
    const std::size_t n = m.rows();
    if (m.cols() != n || n == 0) {
        throw Error(ErrorCode::InvalidArgument, "solve_spd: system matrix must be square and nonempty, got " + shape(m));
    }
    require(rhs.cols() == n, "solve_spd", m, rhs);
    if (!m.all_finite() || !rhs.all_finite()) {
        throw Error(ErrorCode::NonFinite, "solve_spd: non-finite input");
    }

    double max_abs = 0.0;
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        max_diag = std::max(max_diag, std::abs(m(i, i)));
        for (std::size_t j = 0; j < n; ++j) {
            max_abs = std::max(max_abs, std::abs(m(i, j)));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > 1e-10 * max_abs) {
                throw Error(ErrorCode::InvalidArgument, "solve_spd: matrix is not symmetric");
            }
        }
    }

    const double pivot_floor = 64.0 * std::numeric_limits<double>::epsilon() * max_diag;
    std::vector<double> l(m.data().begin(), m.data().end());
    if (!cholesky_in_place(l, n, pivot_floor)) {
        const double jitter = kSpdJitter * (trace(m) / static_cast<double>(n) + 1.0);
        l.assign(m.data().begin(), m.data().end());
        for (std::size_t i = 0; i < n; ++i) {
            l[i * n + i] += jitter;
        }
        if (!cholesky_in_place(l, n, 0.0)) {
            throw Error(ErrorCode::SolveFailed, "solve_spd: factorization failed after diagonal jitter");
        }
    }

    // X M = RHS  <=>  M x_i^T = rhs_i^T for each row, M = L L^T.
    Matrix x(rhs.rows(), n);
    std::vector<double> y(n);
    for (std::size_t row = 0; row < rhs.rows(); ++row) {
        const auto b = rhs.row(row);
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t k = 0; k < i; ++k) {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        auto xi = x.row(row);
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) {
                s -= l[k * n + ii] * xi[k];
            }
            xi[ii] = s / l[ii * n + ii];
        }
    }
    if (!x.all_finite()) {
        throw Error(ErrorCode::SolveFailed, "solve_spd: solution is not finite");
    }
    return x;
}

double fro_norm_sq(const Matrix& a) noexcept {
    double s = 0.0;
    for (double v : a.data()) {
        s += v * v;
    }
    return s;
}

double fro_norm(const Matrix& a) noexcept {
    return std::sqrt(fro_norm_sq(a));
}

double trace(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw Error(ErrorCode::InvalidArgument, "trace of non-square matrix " + shape(a));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        s += a(i, i);
    }
    return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::InvalidArgument, "dot: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double mean_squared_diff(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "mean_squared_diff", a, b);
    if (a.empty()) {
        return 0.0;
    }
    double s = 0.0;
    const auto da = a.data();
    const auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double diff = da[i] - db[i];
        s += diff * diff;
    }
    return s / static_cast<double>(da.size());
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices) {
    Matrix out(0, a.cols());
    out.reserve_rows(indices.size());
    for (std::size_t idx : indices) {
        if (idx >= a.rows()) {
            throw Error(ErrorCode::IndexOutOfRange,
                        "row " + std::to_string(idx) + " of matrix with " + std::to_string(a.rows()) + " rows");
        }
        out.append_row(a.row(idx));
    }
    return out;
}

Matrix head_rows(const Matrix& a, std::size_t count) {
    if (count > a.rows()) {
        throw Error(ErrorCode::IndexOutOfRange, "head_rows: " + std::to_string(count) + " > " +
                                                    std::to_string(a.rows()));
    }
    const auto src = a.data().first(count * a.cols());
    return Matrix(count, a.cols(), std::vector<double>(src.begin(), src.end()));
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k) {
    if (k == 0) {
        throw Error(ErrorCode::InvalidArgument, "topk_indices: k must be >= 1");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t take = std::min(k, idx.size());
    const auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    };
    if (take < idx.size()) {
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), better);
        idx.resize(take);
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace lrqk
