#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lrqk/matrix.hpp"

namespace lrqk {

struct AttentionResult {
    Matrix output;                ///< 1 x d
    std::vector<double> weights;  ///< softmax over the provided keys
};

/// softmax(q K^T / sqrt(d)) V with max subtraction. Throws EmptyKeys for n == 0.
AttentionResult exact_attention(const Matrix& q, const Matrix& keys, const Matrix& values);

/// exact_attention over the rows of keys/values at `indices`.
AttentionResult restricted_attention(const Matrix& q, const Matrix& keys, const Matrix& values,
                                     std::span<const std::size_t> indices);

/// Top-k tokens by exact score q K^T, ascending index order.
std::vector<std::size_t> exact_topk(const Matrix& q, const Matrix& keys, std::size_t k);

/// |proxy & exact| / |exact|. Both sets sorted ascending. Undefined if exact is empty.
double selection_recall(std::span<const std::size_t> proxy, std::span<const std::size_t> exact);

}  // namespace lrqk
