#include "lrqk/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>

#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"

namespace lrqk {

AttentionResult exact_attention(const Matrix& q, const Matrix& keys, const Matrix& values) {
    const std::size_t n = keys.rows();
    if (n == 0) {
        throw Error(ErrorCode::EmptyKeys, "exact_attention needs at least one key");
    }
    const std::size_t d = q.cols();
    if (q.rows() != 1 || keys.cols() != d || values.rows() != n || values.cols() != d) {
        throw Error(ErrorCode::InvalidArgument, "exact_attention: shape mismatch");
    }

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    AttentionResult res{Matrix(1, d), std::vector<double>(n)};
    auto& w = res.weights;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = dot(q.row(0), keys.row(i)) * inv_sqrt_d;
        max_logit = std::max(max_logit, w[i]);
    }
    double sum = 0.0;
    for (double& x : w) {
        x = std::exp(x - max_logit);
        sum += x;
    }
    auto out = res.output.row(0);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] /= sum;
        const auto vi = values.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            out[j] += w[i] * vi[j];
        }
    }
    return res;
}

AttentionResult restricted_attention(const Matrix& q, const Matrix& keys, const Matrix& values,
                                     std::span<const std::size_t> indices) {
    return exact_attention(q, select_rows(keys, indices), select_rows(values, indices));
}

std::vector<std::size_t> exact_topk(const Matrix& q, const Matrix& keys, std::size_t k) {
    if (keys.rows() == 0) {
        throw Error(ErrorCode::EmptyKeys, "exact_topk needs at least one key");
    }
    if (q.rows() != 1 || q.cols() != keys.cols()) {
        throw Error(ErrorCode::InvalidArgument, "exact_topk: shape mismatch");
    }
    std::vector<double> scores(keys.rows());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = dot(q.row(0), keys.row(i));
    }
    return topk_indices(scores, k);
}

double selection_recall(std::span<const std::size_t> proxy, std::span<const std::size_t> exact) {
    if (exact.empty()) {
        throw Error(ErrorCode::Undefined, "selection recall against an empty exact set");
    }
    std::vector<std::size_t> common;
    std::set_intersection(proxy.begin(), proxy.end(), exact.begin(), exact.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(exact.size());
}

}  // namespace lrqk
