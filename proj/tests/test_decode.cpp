#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "lrqk/decode.hpp"
#include "lrqk/matkernels.hpp"
#include "support/oracles.hpp"

using namespace lrqk;
namespace t = lrqk::testing;

namespace {

struct Instance {
    TokenStep step;
    LowRankFactors f;
    Matrix a_res;
    Matrix k_res;
};

Instance random_instance(std::size_t d, std::size_t r, std::size_t omega, std::mt19937_64& rng) {
    Instance in;
    in.step = TokenStep{t::random_matrix(1, d, rng), t::random_matrix(1, d, rng), t::random_matrix(1, d, rng)};
    in.f = LowRankFactors{Matrix(0, r), Matrix(0, r), t::random_matrix(r, d, rng), t::random_matrix(r, d, rng)};
    in.a_res = t::random_matrix(omega, r, rng);
    in.k_res = t::random_matrix(omega, d, rng);
    return in;
}

double objective(const Instance& in, const CompressedToken& c, const DecodeConfig& cfg) {
    return t::direct_decode_objective(in.step.q, in.step.k, c.q_hat, c.k_hat, in.f.b_q, in.f.b_k, in.a_res,
                                      in.k_res, cfg.lambda_1, cfg.lambda_2);
}

Matrix orthonormal_rows() {
    return Matrix::from_rows({{1, 0, 0, 0}, {0, 0, 1, 0}});
}

void expect_near(const Matrix& a, const Matrix& b, double tol) {
    ASSERT_EQ(a.rows(), b.rows());
    ASSERT_EQ(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a.data()[i], b.data()[i], tol) << "entry " << i;
    }
}

}  // namespace

TEST(DecodeConfig, Defaults) {
    const DecodeConfig cfg;
    EXPECT_EQ(cfg.max_iter, 2u);
    EXPECT_DOUBLE_EQ(cfg.tol, 0.01);
    EXPECT_DOUBLE_EQ(cfg.lambda_1, 1.0);
    EXPECT_DOUBLE_EQ(cfg.lambda_2, 1.0);
}

TEST(KhatInitialGuess, Examples) {
    const Matrix b = orthonormal_rows();
    expect_near(khat_initial_guess(Matrix::row_vector({0, 0, 1, 0}), b), Matrix::row_vector({0, 1}), 1e-15);
    expect_near(khat_initial_guess(Matrix::row_vector({0, 3, 0, -1}), b), Matrix::row_vector({0, 0}), 1e-15);

    std::mt19937_64 rng(1);
    const Matrix k = t::random_matrix(1, 6, rng);
    const Matrix bk = t::random_matrix(3, 6, rng);
    const Matrix kh = khat_initial_guess(k, bk);
    EXPECT_LE(t::naive_fro(t::naive_mul(t::naive_sub(t::naive_mul(kh, bk), k), t::naive_t(bk))), 1e-9);
}

TEST(UpdateQhat, Reductions) {
    std::mt19937_64 rng(2);
    auto in = random_instance(6, 3, 4, rng);
    DecodeConfig cfg;
    cfg.lambda_1 = 0.0;
    cfg.lambda_2 = 0.0;
    DecodeWorkspace ws;
    const CompressedToken c{Matrix(1, 3), t::random_matrix(1, 3, rng)};
    const Matrix qh = update_qhat(in.step, c, in.f, in.a_res, in.k_res, cfg, ws);
    expect_near(qh, khat_initial_guess(in.step.q, in.f.b_q), 1e-12);

    cfg.lambda_2 = 5.0;
    const Matrix qh_empty = update_qhat(in.step, c, in.f, Matrix(0, 3), Matrix(0, 6), cfg, ws);
    expect_near(qh_empty, khat_initial_guess(in.step.q, in.f.b_q), 1e-12);
}

TEST(UpdateQhat, StationarityAndWorkspace) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto in = random_instance(8, 3, 5, rng);
        DecodeConfig cfg;
        cfg.lambda_1 = 0.5 + 0.1 * trial;
        cfg.lambda_2 = 2.0;
        DecodeWorkspace ws;
        const CompressedToken c{Matrix(1, 3), t::random_matrix(1, 3, rng)};
        const Matrix qh = update_qhat(in.step, c, in.f, in.a_res, in.k_res, cfg, ws);
        const Matrix g = t::decode_grad_qhat(in.step.q, in.step.k, qh, c.k_hat, in.f.b_q, in.a_res, in.k_res,
                                             cfg.lambda_1, cfg.lambda_2);
        EXPECT_LE(t::naive_fro(g), 1e-8);
        EXPECT_EQ(ws.m_rq, transpose(ws.m_rq));
        EXPECT_EQ(ws.m_lq.cols(), 3u);
    }
}

TEST(UpdateKhat, ReductionsAndStationarity) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        auto in = random_instance(8, 3, 0, rng);
        DecodeConfig cfg;
        cfg.lambda_1 = 0.0;
        const CompressedToken c{t::random_matrix(1, 3, rng), Matrix(1, 3)};
        const Matrix init = khat_initial_guess(in.step.k, in.f.b_k);
        expect_near(update_khat(in.step, c, in.f, cfg), init, 1e-12);

        cfg.lambda_1 = 3.0;
        expect_near(update_khat(in.step, CompressedToken{Matrix(1, 3), Matrix(1, 3)}, in.f, cfg), init, 1e-12);

        const Matrix kh = update_khat(in.step, c, in.f, cfg);
        const Matrix g = t::decode_grad_khat(in.step.q, in.step.k, c.q_hat, kh, in.f.b_k, cfg.lambda_1);
        EXPECT_LE(t::naive_fro(g), 1e-8);
    }
}

TEST(ClosedForm, PerturbationsIncreaseObjective) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 10; ++trial) {
        auto in = random_instance(8, 3, 5, rng);
        const DecodeConfig cfg;
        DecodeWorkspace ws;
        CompressedToken c{Matrix(1, 3), t::random_matrix(1, 3, rng)};
        c.q_hat = update_qhat(in.step, c, in.f, in.a_res, in.k_res, cfg, ws);
        const double base_q = objective(in, c, cfg);
        for (int dir = 0; dir < 20; ++dir) {
            CompressedToken p = c;
            for (std::size_t j = 0; j < 3; ++j) {
                p.q_hat(0, j) += 1e-3 * n01(rng);
            }
            EXPECT_GT(objective(in, p, cfg), base_q);
        }

        c.k_hat = update_khat(in.step, c, in.f, cfg);
        const double base_k = objective(in, c, cfg);
        for (int dir = 0; dir < 20; ++dir) {
            CompressedToken p = c;
            for (std::size_t j = 0; j < 3; ++j) {
                p.k_hat(0, j) += 1e-3 * n01(rng);
            }
            EXPECT_GT(objective(in, p, cfg), base_k);
        }
    }
}

TEST(DecodeObjective, MatchesDirectForm) {
    std::mt19937_64 rng(6);
    auto in = random_instance(8, 3, 5, rng);
    DecodeConfig cfg;
    cfg.lambda_1 = 0.7;
    cfg.lambda_2 = 1.3;
    const CompressedToken c{t::random_matrix(1, 3, rng), t::random_matrix(1, 3, rng)};
    const double ref = objective(in, c, cfg);
    EXPECT_NEAR(decode_objective(in.step, c, in.f, in.a_res, in.k_res, cfg), ref, 1e-12 * ref);
}

TEST(DecodeCompress, InSubspaceIsExact) {
    const Matrix b = orthonormal_rows();
    const TokenStep step{Matrix::row_vector({2, 0, -1, 0}), Matrix::row_vector({0.5, 0, 4, 0}),
                         Matrix::row_vector({1, 1, 1, 1})};
    const LowRankFactors f{Matrix(0, 2), Matrix(0, 2), b, b};
    DecodeConfig cfg;
    cfg.lambda_1 = 0.0;
    cfg.lambda_2 = 0.0;
    const auto res = decode_compress(step, f, Matrix(0, 2), Matrix(0, 4), cfg);
    EXPECT_LE(t::naive_fro(t::naive_sub(t::naive_mul(res.token.q_hat, b), step.q)), 1e-9);
    EXPECT_LE(t::naive_fro(t::naive_sub(t::naive_mul(res.token.k_hat, b), step.k)), 1e-9);
}

TEST(DecodeCompress, AlternationIsMonotone) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto in = random_instance(8, 3, 5, rng);
        DecodeConfig cfg;
        cfg.tol = 1e-300;
        double prev = 0.0;
        for (std::size_t iters = 1; iters <= 6; ++iters) {
            cfg.max_iter = iters;
            const auto res = decode_compress(in.step, in.f, in.a_res, in.k_res, cfg);
            EXPECT_EQ(res.iterations, iters);
            const double value = objective(in, res.token, cfg);
            if (iters > 1) {
                EXPECT_LE(value, prev * (1.0 + 1e-9));
            }
            prev = value;
        }
        const CompressedToken start{Matrix(1, 3), khat_initial_guess(in.step.k, in.f.b_k)};
        EXPECT_LE(prev, objective(in, start, cfg) * (1.0 + 1e-9));
    }
}

TEST(UpdateProjections, ZeroGradientIsNoOp) {
    const Matrix b = orthonormal_rows();
    const TokenStep step{Matrix::row_vector({2, 0, -1, 0}), Matrix::row_vector({0, 0, 3, 0}),
                         Matrix::row_vector({1, 1, 1, 1})};
    LowRankFactors f{Matrix(0, 2), Matrix(0, 2), b, b};
    const CompressedToken c{Matrix::row_vector({2, -1}), Matrix::row_vector({0, 3})};
    DecodeWorkspace ws;
    update_projections(step, c, f, ws);
    EXPECT_EQ(ws.eta_q, 0.0);
    EXPECT_EQ(ws.eta_k, 0.0);
    EXPECT_EQ(f.b_q, b);
    EXPECT_EQ(f.b_k, b);
    EXPECT_EQ(ws.grad_bq, Matrix(2, 4));
}

TEST(UpdateProjections, OnlyProjectionsChange) {
    std::mt19937_64 rng(8);
    auto in = random_instance(6, 2, 0, rng);
    in.f.a_q = t::random_matrix(4, 2, rng);
    in.f.a_k = t::random_matrix(4, 2, rng);
    const auto before = in.f;
    const CompressedToken c{t::random_matrix(1, 2, rng), t::random_matrix(1, 2, rng)};
    DecodeWorkspace ws;
    update_projections(in.step, c, in.f, ws);
    EXPECT_EQ(in.f.a_q, before.a_q);
    EXPECT_EQ(in.f.a_k, before.a_k);
    EXPECT_NE(in.f.b_q, before.b_q);
}

TEST(UpdateProjections, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        auto in = random_instance(16, 4, 0, rng);
        const CompressedToken c{t::random_matrix(1, 4, rng), t::random_matrix(1, 4, rng)};
        DecodeWorkspace ws;
        LowRankFactors f = in.f;
        update_projections(in.step, c, f, ws);

        auto check = [&](const Matrix& b, const Matrix& x, const Matrix& target, const Matrix& grad) {
            auto half_res = [&](const Matrix& bb) {
                return 0.5 * t::naive_fro_sq(t::naive_sub(t::naive_mul(x, bb), target));
            };
            Matrix fd(b.rows(), b.cols());
            for (std::size_t i = 0; i < b.size(); ++i) {
                Matrix plus = b;
                Matrix minus = b;
                plus.data()[i] += 1e-6;
                minus.data()[i] -= 1e-6;
                fd.data()[i] = (half_res(plus) - half_res(minus)) / 2e-6;
            }
            EXPECT_LE(t::naive_fro(t::naive_sub(fd, grad)), 1e-5 * t::naive_fro(grad));
        };
        check(in.f.b_q, c.q_hat, in.step.q, ws.grad_bq);
        check(in.f.b_k, c.k_hat, in.step.k, ws.grad_bk);
    }
}

TEST(UpdateProjections, ExactLineSearchOnGrid) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 30; ++trial) {
        auto in = random_instance(8, 3, 0, rng);
        const CompressedToken c{t::random_matrix(1, 3, rng), t::random_matrix(1, 3, rng)};
        DecodeWorkspace ws;
        LowRankFactors f = in.f;
        update_projections(in.step, c, f, ws);

        auto side = [&](const Matrix& b0, const Matrix& b1, const Matrix& x, const Matrix& target,
                        const Matrix& grad, double eta) {
            auto res = [&](const Matrix& bb) { return t::naive_fro_sq(t::naive_sub(t::naive_mul(x, bb), target)); };
            const double at_star = res(b1);
            double grid_min = INFINITY;
            for (int i = 0; i <= 100; ++i) {
                const double e = 2.0 * eta * i / 100.0;
                const double r = res(t::naive_axpy(b0, -e, grad));
                grid_min = std::min(grid_min, r);
                EXPECT_LE(at_star, r + 1e-10);
            }
            EXPECT_NEAR(at_star, grid_min, 1e-10);
        };
        side(in.f.b_q, f.b_q, c.q_hat, in.step.q, ws.grad_bq, ws.eta_q);
        side(in.f.b_k, f.b_k, c.k_hat, in.step.k, ws.grad_bk, ws.eta_k);
    }
}

TEST(UpdateProjections, GradientHasRankOne) {
    std::mt19937_64 rng(11);
    auto in = random_instance(8, 4, 0, rng);
    const CompressedToken c{t::random_matrix(1, 4, rng), t::random_matrix(1, 4, rng)};
    DecodeWorkspace ws;
    update_projections(in.step, c, in.f, ws);
    // Gram matrix G G^T of an outer product has at most one nonzero eigenvalue:
    // its trace squared equals its Frobenius norm squared.
    const Matrix gram_q = outer_gram(ws.grad_bq);
    const double tr = trace(gram_q);
    EXPECT_NEAR(tr * tr, fro_norm_sq(gram_q), 1e-10 * tr * tr);
}
