#include "lrqk/prefill.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"

namespace lrqk {

void PrefillInput::validate() const {
    if (q.rows() != k.rows() || q.cols() != k.cols()) {
        throw Error(ErrorCode::InvalidArgument, "prefill input: Q and K must share shape");
    }
    if (q.rows() == 0 || q.cols() == 0) {
        throw Error(ErrorCode::InvalidArgument, "prefill input: empty Q/K");
    }
}

std::string_view to_string(InitKind kind) noexcept {
    switch (kind) {
    case InitKind::Randn:
        return "randn";
    case InitKind::TopR:
        return "top";
    case InitKind::TopCol:
        return "topcol";
    }
    return "randn";
}

InitKind parse_init_kind(std::string_view name) {
    if (name == "randn") {
        return InitKind::Randn;
    }
    if (name == "top") {
        return InitKind::TopR;
    }
    if (name == "topcol") {
        return InitKind::TopCol;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown init strategy '" + std::string(name) + "'");
}

void PrefillConfig::validate(std::size_t head_dim) const {
    if (rank == 0) {
        throw Error(ErrorCode::InvalidArgument, "rank must be >= 1");
    }
    if (rank > head_dim) {
        throw Error(ErrorCode::RankTooLarge,
                    "rank " + std::to_string(rank) + " exceeds head dim " + std::to_string(head_dim));
    }
    if (!(lambda_q >= 0.0) || !(lambda_k >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "prefill lambdas must be >= 0");
    }
    if (!(tol > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "prefill tol must be > 0");
    }
    if (max_iter == 0) {
        throw Error(ErrorCode::InvalidArgument, "prefill max_iter must be >= 1");
    }
}

ImportanceScores importance_scores(const PrefillInput& input) {
    const std::size_t d = input.head_dim();
    ImportanceScores s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < input.seq_len(); ++i) {
        const auto qi = input.q.row(i);
        const auto ki = input.k.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            s.s_q[j] += std::abs(qi[j]);
            s.s_k[j] += std::abs(ki[j]);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        s.s_qk[j] = s.s_q[j] + s.s_k[j];
    }
    return s;
}

namespace {

Matrix gather_columns(const Matrix& x, const std::vector<std::size_t>& cols) {
    Matrix out(x.rows(), cols.size());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out(i, j) = x(i, cols[j]);
        }
    }
    return out;
}

// <A, B> over equal-shape matrices.
double frobenius_inner(const Matrix& a, const Matrix& b) {
    return dot(a.data(), b.data());
}

double factor_residual_sq(const Matrix& x, const Matrix& a, const Matrix& b) {
    return fro_norm_sq(x - matmul(a, b));
}

}  // namespace

LowRankFactors init_factors(const PrefillInput& input, const PrefillConfig& cfg) {
    input.validate();
    cfg.validate(input.head_dim());
    const std::size_t l = input.seq_len();
    const std::size_t d = input.head_dim();
    const std::size_t r = cfg.rank;

    LowRankFactors f{Matrix(l, r), Matrix(l, r), Matrix(r, d), Matrix(r, d)};
    switch (cfg.init.kind) {
    case InitKind::Randn: {
        std::mt19937_64 rng(cfg.init.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (double& x : f.a_q.data()) {
            x = normal(rng);
        }
        for (double& x : f.a_k.data()) {
            x = normal(rng);
        }
        break;
    }
    case InitKind::TopR: {
        const auto s = importance_scores(input);
        f.a_q = gather_columns(input.q, topk_indices(s.s_q, r));
        f.a_k = gather_columns(input.k, topk_indices(s.s_k, r));
        break;
    }
    case InitKind::TopCol: {
        const auto s = importance_scores(input);
        const auto cols = topk_indices(s.s_qk, r);
        f.a_q = gather_columns(input.q, cols);
        f.a_k = gather_columns(input.k, cols);
        break;
    }
    }
    return f;
}

double lagrangian_value(const PrefillInput& input, const LowRankFactors& f, const PrefillConfig& cfg,
                        LagrangianForm form) {
    input.validate();
    const std::size_t l = input.seq_len();
    if (form == LagrangianForm::Auto) {
        form = l <= kDirectLagrangianMaxLen ? LagrangianForm::Direct : LagrangianForm::Reassociated;
    }

    double score_term = 0.0;
    if (form == LagrangianForm::Direct) {
        std::vector<double> row(l);
        for (std::size_t i = 0; i < l; ++i) {
            const auto qi = input.q.row(i);
            const auto ai = f.a_q.row(i);
            for (std::size_t j = 0; j < l; ++j) {
                row[j] = dot(qi, input.k.row(j)) - dot(ai, f.a_k.row(j));
            }
            for (double v : row) {
                score_term += v * v;
            }
        }
    } else {
        // ||QK^T||^2 - 2 <Q^T a_q, K^T a_k> + <a_q^T a_q, a_k^T a_k>
        const double full = frobenius_inner(gram(input.q), gram(input.k));
        const double cross = frobenius_inner(matmul_tn(input.q, f.a_q), matmul_tn(input.k, f.a_k));
        const double approx = frobenius_inner(gram(f.a_q), gram(f.a_k));
        score_term = std::max(0.0, full - 2.0 * cross + approx);
    }

    return 0.5 * score_term + 0.5 * cfg.lambda_q * factor_residual_sq(input.q, f.a_q, f.b_q) +
           0.5 * cfg.lambda_k * factor_residual_sq(input.k, f.a_k, f.b_k);
}

Matrix update_b(const Matrix& a, const Matrix& x) {
    if (a.rows() != x.rows()) {
        throw Error(ErrorCode::InvalidArgument, "update_b: row mismatch between A and X");
    }
    // B^T (A^T A) = X^T A
    return transpose(solve_spd(gram(a), matmul_tn(x, a)));
}

Matrix update_a_k(const PrefillInput& input, const LowRankFactors& f, const PrefillConfig& cfg) {
    // a_k = K (Q^T a_q + lambda_k b_k^T) (a_q^T a_q + lambda_k b_k b_k^T)^{-1}
    Matrix inner = matmul_tn(input.q, f.a_q);
    inner += cfg.lambda_k * transpose(f.b_k);
    Matrix system = gram(f.a_q);
    system += cfg.lambda_k * outer_gram(f.b_k);
    return solve_spd(system, matmul(input.k, inner));
}

Matrix update_a_q(const PrefillInput& input, const LowRankFactors& f, const PrefillConfig& cfg) {
    // a_q = Q (K^T a_k + lambda_q b_q^T) (a_k^T a_k + lambda_q b_q b_q^T)^{-1}
    Matrix inner = matmul_tn(input.k, f.a_k);
    inner += cfg.lambda_q * transpose(f.b_q);
    Matrix system = gram(f.a_k);
    system += cfg.lambda_q * outer_gram(f.b_q);
    return solve_spd(system, matmul(input.q, inner));
}

LowRankFactors prefill_factorize_from(const PrefillInput& input, LowRankFactors f, const PrefillConfig& cfg,
                                      const SweepObserver& observer) {
    input.validate();
    cfg.validate(input.head_dim());

    for (std::size_t sweep = 1; sweep <= cfg.max_iter; ++sweep) {
        const LowRankFactors prev = f;

        f.b_q = update_b(f.a_q, input.q);
        f.b_k = update_b(f.a_k, input.k);
        f.a_k = update_a_k(input, f, cfg);
        f.a_q = update_a_q(input, f, cfg);

        if (!f.a_q.all_finite() || !f.a_k.all_finite() || !f.b_q.all_finite() || !f.b_k.all_finite()) {
            throw Error(ErrorCode::NonFinite, "prefill factors diverged at sweep " + std::to_string(sweep));
        }

        const double change = 0.25 * (mean_squared_diff(f.a_q, prev.a_q) + mean_squared_diff(f.a_k, prev.a_k) +
                                      mean_squared_diff(f.b_q, prev.b_q) + mean_squared_diff(f.b_k, prev.b_k));
        if (observer) {
            observer(SweepInfo{sweep, lagrangian_value(input, f, cfg), change});
        }
        if (change <= cfg.tol) {
            break;
        }
    }
    return f;
}

LowRankFactors prefill_factorize(const PrefillInput& input, const PrefillConfig& cfg, const SweepObserver& observer) {
    return prefill_factorize_from(input, init_factors(input, cfg), cfg, observer);
}

}  // namespace lrqk
