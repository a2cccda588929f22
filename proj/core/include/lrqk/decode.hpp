#pragma once

#include <cstddef>

#include "lrqk/matrix.hpp"
#include "lrqk/prefill.hpp"

namespace lrqk {

/// Projections of the current token, each 1 x d.
struct TokenStep {
    Matrix q;
    Matrix k;
    Matrix v;

    void validate() const;
};

/// Rank-r stand-ins for q_t and k_t, each 1 x r.
struct CompressedToken {
    Matrix q_hat;
    Matrix k_hat;
};

struct DecodeConfig {
    double lambda_1 = 1.0;  ///< weight on (q_hat k_hat^T - q k^T)^2
    double lambda_2 = 1.0;  ///< weight on the resident-score consistency term
    std::size_t max_iter = 2;
    double tol = 0.01;

    void validate() const;
};

/// Intermediate quantities of the last q_hat solve and of the projection step.
struct DecodeWorkspace {
    Matrix m_lq;     ///< 1 x r right-hand side of the q_hat system
    Matrix m_rq;     ///< r x r system matrix of the q_hat system
    Matrix grad_bq;  ///< r x d
    Matrix grad_bk;  ///< r x d
    double eta_q = 0.0;
    double eta_k = 0.0;
};

/// Least-squares fit of k in the row space of b_k: (k b_k^T)(b_k b_k^T)^{-1}.
Matrix khat_initial_guess(const Matrix& k, const Matrix& b_k);

/**
 * Closed-form q_hat given the current k_hat.
 *
 * a_k_resident / k_resident are the proxy rows and full key rows of the tokens
 * resident in the fast tier before this step (may have zero rows). Fills
 * ws.m_lq and ws.m_rq.
 */
Matrix update_qhat(const TokenStep& step, const CompressedToken& comp, const LowRankFactors& f,
                   const Matrix& a_k_resident, const Matrix& k_resident, const DecodeConfig& cfg,
                   DecodeWorkspace& ws);

/// Closed-form k_hat given the current q_hat.
Matrix update_khat(const TokenStep& step, const CompressedToken& comp, const LowRankFactors& f,
                   const DecodeConfig& cfg);

/// Value of the decode objective for the given compressed pair.
double decode_objective(const TokenStep& step, const CompressedToken& comp, const LowRankFactors& f,
                        const Matrix& a_k_resident, const Matrix& k_resident, const DecodeConfig& cfg);

struct CompressResult {
    CompressedToken token;
    DecodeWorkspace workspace;
    std::size_t iterations = 0;
};

/**
 * k_hat from the initial guess and q_hat = 0, then alternating q_hat / k_hat
 * updates until max_iter or until the mean squared change of the concatenated
 * (q_hat, k_hat) row drops to tol.
 */
CompressResult decode_compress(const TokenStep& step, const LowRankFactors& f, const Matrix& a_k_resident,
                               const Matrix& k_resident, const DecodeConfig& cfg);

/**
 * One gradient step on b_q and b_k with the exact line-search step size for
 * 1/2 ||q_hat b - q||^2 (resp. k). A degenerate step denominator, below
 * 1e-14 * (1 + |numerator|), gives eta = 0. Only f.b_q and f.b_k change.
 */
void update_projections(const TokenStep& step, const CompressedToken& comp, LowRankFactors& f,
                        DecodeWorkspace& ws);

}  // namespace lrqk
