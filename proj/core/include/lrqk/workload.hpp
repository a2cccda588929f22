#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "lrqk/matrix.hpp"
#include "lrqk/prefill.hpp"

namespace lrqk {

/// Q, K, V of one head, each l x d.
struct HeadTensors {
    Matrix q;
    Matrix k;
    Matrix v;

    std::size_t seq_len() const noexcept {
        return q.rows();
    }
    std::size_t head_dim() const noexcept {
        return q.cols();
    }
    PrefillInput prefill_input() const {
        return PrefillInput{q, k};
    }
};

/**
 * Parameters of a synthetic head. Q and K get singular values
 * scale * decay^i for i < true_rank and zero beyond.
 */
struct SyntheticSpec {
    std::size_t seq_len = 4096;
    std::size_t head_dim = 128;
    std::size_t true_rank = 32;
    double decay = 0.9;
    double recency_strength = 0.0;
    double scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Q = U diag(sigma) W^T with random orthonormal U (l x r), W (d x r); K drawn
/// the same way independently; V standard normal. Deterministic in the seed.
HeadTensors gen_lowrank_qk(const SyntheticSpec& spec);

/**
 * gen_lowrank_qk plus, for every key i, a pull toward the queries that follow
 * it: k_i += s sqrt(d) sum_{j=i}^{i+16} exp(-(j-i)) q_j / |q_j|^2. The logit of
 * q_t against its own key gains about s, against k_{t-1} about s/e, and so on.
 * With s == 0 the output is identical to gen_lowrank_qk.
 */
HeadTensors gen_recency_biased(const SyntheticSpec& spec);

/**
 * Exact rank-r heads built as Gaussian factor products, Q = G_q H_q / sqrt(r)
 * and K likewise (entries have unit variance). Rows past a prefix are drawn from
 * the same factors, so decode tokens stay in the prompt's subspaces.
 */
HeadTensors gen_factor_product(std::size_t seq_len, std::size_t head_dim, std::size_t rank, std::uint64_t seed);

/// Singular values in non-increasing order (one-sided Jacobi), min(rows, cols) of them.
std::vector<double> singular_spectrum(const Matrix& m);

/**
 * Mean causal attention mass on the last `window` keys. For every query t >=
 * window - 1 take softmax(q_t k_{0..t}^T / sqrt(d)), keep its last `window`
 * weights and average over t. Entry window-1 is the current token (offset 0).
 */
std::vector<double> neighbor_attention_profile(const Matrix& q, const Matrix& k, std::size_t window = 16);

void write_spectrum_csv(std::ostream& out, std::span<const double> sigma);
void write_profile_csv(std::ostream& out, std::span<const double> profile);

}  // namespace lrqk
