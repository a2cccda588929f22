#include "lrqk/decode.hpp"

#include <cmath>
#include <string>

#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"

namespace lrqk {

void TokenStep::validate() const {
    const std::size_t d = q.cols();
    if (q.rows() != 1 || k.rows() != 1 || v.rows() != 1 || k.cols() != d || v.cols() != d || d == 0) {
        throw Error(ErrorCode::InvalidArgument, "token step: q, k, v must be 1 x d rows of equal width");
    }
}

void DecodeConfig::validate() const {
    if (!(lambda_1 >= 0.0) || !(lambda_2 >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "decode lambdas must be >= 0");
    }
    if (!(tol > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "decode tol must be > 0");
    }
    if (max_iter == 0) {
        throw Error(ErrorCode::InvalidArgument, "decode max_iter must be >= 1");
    }
}

namespace {

double scalar(const Matrix& a, const Matrix& b) {
    return dot(a.row(0), b.row(0));
}

Matrix concat_row(const Matrix& a, const Matrix& b) {
    Matrix out(1, a.cols() + b.cols());
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.cols()));
    return out;
}

// Step size minimizing 1/2 ||x_hat (b - eta g) - x||^2 for g = x_hat^T residual.
double line_search_step(const Matrix& residual, const Matrix& x_hat, const Matrix& grad) {
    const Matrix direction = matmul(x_hat, grad);
    const double num = scalar(residual, direction);
    const double den = scalar(direction, direction);
    if (den < 1e-14 * (1.0 + std::abs(num))) {
        return 0.0;
    }
    return num / den;
}

}  // namespace

Matrix khat_initial_guess(const Matrix& k, const Matrix& b_k) {
    if (k.rows() != 1 || k.cols() != b_k.cols()) {
        throw Error(ErrorCode::InvalidArgument, "khat_initial_guess: k must be 1 x d matching b_k");
    }
    return solve_spd(outer_gram(b_k), matmul_nt(k, b_k));
}

Matrix update_qhat(const TokenStep& step, const CompressedToken& comp, const LowRankFactors& f,
                   const Matrix& a_k_resident, const Matrix& k_resident, const DecodeConfig& cfg,
                   DecodeWorkspace& ws) {
    if (a_k_resident.rows() != k_resident.rows()) {
        throw Error(ErrorCode::InvalidArgument, "update_qhat: resident proxy and key rows differ in count");
    }
    const double qk = scalar(step.q, step.k);

    // m_lq = q b_q^T + l1 (q k^T) k_hat + l2 (q K_res^T) A_res
    ws.m_lq = matmul_nt(step.q, f.b_q);
    ws.m_lq += (cfg.lambda_1 * qk) * comp.k_hat;
    if (a_k_resident.rows() > 0) {
        ws.m_lq += cfg.lambda_2 * matmul(matmul_nt(step.q, k_resident), a_k_resident);
    }

    // M_rq = b_q b_q^T + l1 k_hat^T k_hat + l2 A_res^T A_res
    ws.m_rq = outer_gram(f.b_q);
    ws.m_rq += cfg.lambda_1 * gram(comp.k_hat);
    if (a_k_resident.rows() > 0) {
        ws.m_rq += cfg.lambda_2 * gram(a_k_resident);
    }
    return solve_spd(ws.m_rq, ws.m_lq);
}

Matrix update_khat(const TokenStep& step, const CompressedToken& comp, const LowRankFactors& f,
                   const DecodeConfig& cfg) {
    const double kq = scalar(step.k, step.q);
    Matrix rhs = matmul_nt(step.k, f.b_k);
    rhs += (cfg.lambda_1 * kq) * comp.q_hat;
    Matrix system = outer_gram(f.b_k);
    system += cfg.lambda_1 * gram(comp.q_hat);
    return solve_spd(system, rhs);
}

double decode_objective(const TokenStep& step, const CompressedToken& comp, const LowRankFactors& f,
                        const Matrix& a_k_resident, const Matrix& k_resident, const DecodeConfig& cfg) {
    const double q_fit = fro_norm_sq(matmul(comp.q_hat, f.b_q) - step.q);
    const double k_fit = fro_norm_sq(matmul(comp.k_hat, f.b_k) - step.k);
    const double coupling = scalar(comp.q_hat, comp.k_hat) - scalar(step.q, step.k);
    double resident = 0.0;
    if (a_k_resident.rows() > 0) {
        resident = fro_norm_sq(matmul_nt(comp.q_hat, a_k_resident) - matmul_nt(step.q, k_resident));
    }
    return 0.5 * (q_fit + k_fit + cfg.lambda_1 * coupling * coupling + cfg.lambda_2 * resident);
}

CompressResult decode_compress(const TokenStep& step, const LowRankFactors& f, const Matrix& a_k_resident,
                               const Matrix& k_resident, const DecodeConfig& cfg) {
    step.validate();
    cfg.validate();
    if (f.b_q.cols() != step.q.cols() || f.b_k.cols() != step.k.cols()) {
        throw Error(ErrorCode::InvalidArgument, "decode_compress: head dim differs from projection factors");
    }

    CompressResult out;
    out.token.k_hat = khat_initial_guess(step.k, f.b_k);
    out.token.q_hat = Matrix(1, f.b_q.rows());

    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
        const Matrix prev = concat_row(out.token.q_hat, out.token.k_hat);
        out.token.q_hat = update_qhat(step, out.token, f, a_k_resident, k_resident, cfg, out.workspace);
        out.token.k_hat = update_khat(step, out.token, f, cfg);
        out.iterations = it;
        if (mean_squared_diff(concat_row(out.token.q_hat, out.token.k_hat), prev) <= cfg.tol) {
            break;
        }
    }
    return out;
}

void update_projections(const TokenStep& step, const CompressedToken& comp, LowRankFactors& f,
                        DecodeWorkspace& ws) {
    const Matrix residual_q = matmul(comp.q_hat, f.b_q) - step.q;
    const Matrix residual_k = matmul(comp.k_hat, f.b_k) - step.k;
    ws.grad_bq = matmul_tn(comp.q_hat, residual_q);
    ws.grad_bk = matmul_tn(comp.k_hat, residual_k);
    ws.eta_q = line_search_step(residual_q, comp.q_hat, ws.grad_bq);
    ws.eta_k = line_search_step(residual_k, comp.k_hat, ws.grad_bk);
    if (ws.eta_q != 0.0) {
        f.b_q -= ws.eta_q * ws.grad_bq;
    }
    if (ws.eta_k != 0.0) {
        f.b_k -= ws.eta_k * ws.grad_bk;
    }
}

}  // namespace lrqk
