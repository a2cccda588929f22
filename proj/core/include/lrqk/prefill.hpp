#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "lrqk/matrix.hpp"

namespace lrqk {

/// Per-head prompt projections, both l x d.
struct PrefillInput {
    Matrix q;
    Matrix k;

    std::size_t seq_len() const noexcept {
        return q.rows();
    }
    std::size_t head_dim() const noexcept {
        return q.cols();
    }
    void validate() const;
};

/**
 * Rank-r factors with Q ~ a_q b_q, K ~ a_k b_k and Q K^T ~ a_q a_k^T.
 * a_q, a_k are l x r (one row per token); b_q, b_k are r x d.
 */
struct LowRankFactors {
    Matrix a_q;
    Matrix a_k;
    Matrix b_q;
    Matrix b_k;

    std::size_t rank() const noexcept {
        return a_q.cols();
    }
};

enum class InitKind {
    Randn,   ///< a_q, a_k ~ N(0, 1)
    TopR,    ///< columns of Q (resp. K) with the largest L1 column mass
    TopCol,  ///< both use the top-r columns of the combined Q + K mass
};

std::string_view to_string(InitKind kind) noexcept;
InitKind parse_init_kind(std::string_view name);

struct InitStrategy {
    InitKind kind = InitKind::Randn;
    std::uint64_t seed = 0;
};

enum class LagrangianForm {
    Auto,          ///< Direct up to kDirectLagrangianMaxLen rows, re-associated above.
    Direct,        ///< Streams rows of Q K^T - a_q a_k^T; O(l^2 d).
    Reassociated,  ///< Uses only d x d / d x r / r x r products; O(l d (d + r)).
};

inline constexpr std::size_t kDirectLagrangianMaxLen = 1024;

struct PrefillConfig {
    std::size_t rank = 32;
    double lambda_q = 1.0;
    double lambda_k = 1.0;
    std::size_t max_iter = 2;
    double tol = 0.01;
    InitStrategy init{};

    /// Throws RankTooLarge if rank > head_dim, InvalidArgument for other ranges.
    void validate(std::size_t head_dim) const;
};

/// Column-wise L1 mass of |Q| and |K| and their sum.
struct ImportanceScores {
    std::vector<double> s_q;
    std::vector<double> s_k;
    std::vector<double> s_qk;
};

ImportanceScores importance_scores(const PrefillInput& input);

/// Initial factors. b_q and b_k are zero: the first sweep overwrites them.
LowRankFactors init_factors(const PrefillInput& input, const PrefillConfig& cfg);

/// 1/2 ||QK^T - a_q a_k^T||^2 + lambda_q/2 ||Q - a_q b_q||^2 + lambda_k/2 ||K - a_k b_k||^2
double lagrangian_value(const PrefillInput& input, const LowRankFactors& f, const PrefillConfig& cfg,
                        LagrangianForm form = LagrangianForm::Auto);

/// Least-squares B = (A^T A)^{-1} A^T X.
Matrix update_b(const Matrix& a, const Matrix& x);

/// Exact minimizer of the Lagrangian in a_k with the other blocks fixed.
Matrix update_a_k(const PrefillInput& input, const LowRankFactors& f, const PrefillConfig& cfg);

/// Exact minimizer of the Lagrangian in a_q with the other blocks fixed.
Matrix update_a_q(const PrefillInput& input, const LowRankFactors& f, const PrefillConfig& cfg);

struct SweepInfo {
    std::size_t sweep = 0;  ///< 1-based
    double lagrangian = 0.0;
    double mean_sq_change = 0.0;
};

using SweepObserver = std::function<void(const SweepInfo&)>;

/**
 * Block coordinate descent over (b_q, b_k, a_k, a_q), in that order, starting
 * from init_factors(). Stops after max_iter sweeps or once the mean over the
 * four factors of ||F_new - F_old||_F^2 / numel(F) drops to tol. At least one
 * sweep always runs. The observer, if set, is called after each sweep (the
 * Lagrangian is only evaluated when an observer is present).
 */
LowRankFactors prefill_factorize(const PrefillInput& input, const PrefillConfig& cfg,
                                 const SweepObserver& observer = {});

/// Runs the same sweeps from caller-supplied starting factors.
LowRankFactors prefill_factorize_from(const PrefillInput& input, LowRankFactors start, const PrefillConfig& cfg,
                                      const SweepObserver& observer = {});

}  // namespace lrqk
