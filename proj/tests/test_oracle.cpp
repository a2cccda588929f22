#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"
#include "lrqk/oracle.hpp"
#include "support/oracles.hpp"

using namespace lrqk;
namespace t = lrqk::testing;

TEST(ExactAttention, SingleKey) {
    const Matrix q = Matrix::row_vector({1, 2});
    const Matrix k = Matrix::row_vector({3, -1});
    const Matrix v = Matrix::row_vector({0.5, 7});
    const auto res = exact_attention(q, k, v);
    EXPECT_EQ(res.weights, (std::vector<double>{1.0}));
    EXPECT_EQ(res.output, v);
}

TEST(ExactAttention, IdenticalKeysAverageValues) {
    const Matrix q = Matrix::row_vector({1, 2});
    const Matrix k = Matrix::from_rows({{1, 1}, {1, 1}});
    const Matrix v = Matrix::from_rows({{2, 0}, {4, 6}});
    const auto res = exact_attention(q, k, v);
    EXPECT_DOUBLE_EQ(res.weights[0], 0.5);
    EXPECT_DOUBLE_EQ(res.weights[1], 0.5);
    EXPECT_DOUBLE_EQ(res.output(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(res.output(0, 1), 3.0);
}

TEST(ExactAttention, MatchesLongDoubleOracle) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix q = t::random_matrix(1, 4, rng, 1.0 + trial);
        const Matrix k = t::random_matrix(8, 4, rng);
        const Matrix v = t::random_matrix(8, 4, rng);
        std::vector<long double> w;
        const auto ref = t::long_double_attention(q, k, v, &w);
        const auto res = exact_attention(q, k, v);
        double sum = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            EXPECT_NEAR(res.weights[i], static_cast<double>(w[i]), 1e-12);
            EXPECT_GE(res.weights[i], 0.0);
            sum += res.weights[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_NEAR(res.output(0, j), static_cast<double>(ref[j]), 1e-12);
        }
    }
}

TEST(ExactAttention, ShiftInvariance) {
    // Adding c * q / |q|^2 to every key shifts all logits by the same constant.
    std::mt19937_64 rng(2);
    const Matrix q = t::random_matrix(1, 5, rng);
    const Matrix k = t::random_matrix(12, 5, rng);
    const Matrix v = t::random_matrix(12, 5, rng);
    Matrix shifted = k;
    const double qq = fro_norm_sq(q);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            shifted(i, j) += 40.0 * q(0, j) / qq;
        }
    }
    const auto a = exact_attention(q, k, v);
    const auto b = exact_attention(q, shifted, v);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_NEAR(a.weights[i], b.weights[i], 1e-12);
    }
}

TEST(ExactAttention, LargeLogitsStayFinite) {
    const Matrix q = Matrix::row_vector({1000, 0});
    const Matrix k = Matrix::from_rows({{1000, 0}, {999, 0}});
    const Matrix v = Matrix::from_rows({{1, 0}, {0, 1}});
    const auto res = exact_attention(q, k, v);
    EXPECT_TRUE(res.output.all_finite());
    EXPECT_NEAR(res.weights[0] + res.weights[1], 1.0, 1e-12);
}

TEST(ExactAttention, EmptyKeys) {
    try {
        exact_attention(Matrix(1, 3), Matrix(0, 3), Matrix(0, 3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyKeys);
    }
}

TEST(RestrictedAttention, EqualsSoftmaxOverSubset) {
    std::mt19937_64 rng(3);
    const Matrix q = t::random_matrix(1, 6, rng);
    const Matrix k = t::random_matrix(20, 6, rng);
    const Matrix v = t::random_matrix(20, 6, rng);
    const std::vector<std::size_t> omega{1, 4, 5, 11, 19};
    const auto res = restricted_attention(q, k, v, omega);
    const auto ref = t::long_double_attention(q, select_rows(k, omega), select_rows(v, omega));
    for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_NEAR(res.output(0, j), static_cast<double>(ref[j]), 1e-12);
    }
}

TEST(ExactTopk, Examples) {
    const Matrix k = Matrix::identity(4);
    EXPECT_EQ(exact_topk(Matrix::row_vector({0, 0, 1, 0}), k, 1), (std::vector<std::size_t>{2}));
    EXPECT_EQ(exact_topk(Matrix::row_vector({0, 0, 1, 0}), k, 9), (std::vector<std::size_t>{0, 1, 2, 3}));

    std::mt19937_64 rng(4);
    const Matrix q = t::random_matrix(1, 5, rng);
    const Matrix keys = t::random_matrix(40, 5, rng);
    std::vector<double> scores(40);
    for (std::size_t i = 0; i < 40; ++i) {
        scores[i] = dot(q.row(0), keys.row(i));
    }
    EXPECT_EQ(exact_topk(q, keys, 7), t::sort_topk(scores, 7));
}

TEST(SelectionRecall, Examples) {
    const std::vector<std::size_t> a{1, 2, 3, 4};
    const std::vector<std::size_t> b{3, 4, 5, 6};
    const std::vector<std::size_t> c{7, 8};
    EXPECT_DOUBLE_EQ(selection_recall(a, a), 1.0);
    EXPECT_DOUBLE_EQ(selection_recall(a, c), 0.0);
    EXPECT_DOUBLE_EQ(selection_recall(a, b), 0.5);
    try {
        selection_recall(a, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Undefined);
    }
}

TEST(ExactRankEquivalence, ProxyTopkMatchesExact) {
    // Q K^T = A_Q A_K^T with B_Q B_K^T = I; q_hat = a_q row gives q_hat A_K^T == q K^T.
    std::mt19937_64 rng(5);
    const std::size_t l = 30, d = 6, r = 3;
    Matrix b(r, d);
    for (std::size_t i = 0; i < r; ++i) {
        b(i, i) = 1.0;
    }
    const Matrix a_q = t::random_matrix(l, r, rng);
    const Matrix a_k = t::random_matrix(l, r, rng);
    const Matrix keys = matmul(a_k, b);
    for (std::size_t row = 0; row < l; ++row) {
        const Matrix q = matmul(Matrix::row_vector(a_q.row(row)), b);
        const Matrix q_hat = Matrix::row_vector(a_q.row(row));
        std::vector<double> proxy(l);
        for (std::size_t i = 0; i < l; ++i) {
            proxy[i] = dot(q_hat.row(0), a_k.row(i));
        }
        EXPECT_EQ(t::sort_topk(proxy, 5), exact_topk(q, keys, 5));
    }
}
