#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "lrqk/matrix.hpp"

namespace lrqk {

/// Index sets of one decode step. All three are sorted ascending.
struct SelectionSet {
    std::vector<std::size_t> active;    ///< top-k by proxy score, excluding lite tokens
    std::vector<std::size_t> lite;      ///< the most recent tokens, current one included
    std::vector<std::size_t> resident;  ///< active U lite
};

struct StepCacheStat {
    std::size_t step = 0;
    std::size_t miss_count = 0;
    std::size_t selected_count = 0;
};

struct CacheStats {
    std::uint64_t c_miss = 0;
    std::uint64_t c_total = 0;
    std::vector<StepCacheStat> per_step;
};

/**
 * Two-tier KV store for one head of one sequence.
 *
 *   slow tier   every K/V row ever appended, never evicted
 *   fast tier   the rows of the current resident window, sorted by token index
 *   proxy store one rank-r row per token (a_k rows from prefill, then k_hat)
 *
 * Fast-tier rows are copies of slow-tier rows; a fetch only counts a slow-tier
 * read for rows that are not already resident.
 */
class TieredKVCache {
public:
    TieredKVCache(std::size_t head_dim, std::size_t rank, std::size_t k_budget, std::size_t lite_budget);

    std::size_t head_dim() const noexcept {
        return m_slow_k.cols();
    }
    std::size_t rank() const noexcept {
        return m_proxy.cols();
    }
    std::size_t k_budget() const noexcept {
        return m_k_budget;
    }
    std::size_t lite_budget() const noexcept {
        return m_lite_budget;
    }
    /// Tokens held by the slow tier.
    std::size_t token_count() const noexcept {
        return m_slow_k.rows();
    }

    const Matrix& slow_keys() const noexcept {
        return m_slow_k;
    }
    const Matrix& slow_values() const noexcept {
        return m_slow_v;
    }
    const Matrix& proxy_store() const noexcept {
        return m_proxy;
    }

    const std::vector<std::size_t>& resident_indices() const noexcept {
        return m_resident;
    }
    const Matrix& resident_keys() const noexcept {
        return m_fast_k;
    }
    const Matrix& resident_values() const noexcept {
        return m_fast_v;
    }
    /// Proxy rows of the resident tokens, in resident order.
    Matrix resident_proxies() const;

    /// Rows read from the slow tier by fetches so far.
    std::uint64_t slow_reads() const noexcept {
        return m_slow_reads;
    }

    /**
     * Appends token t = token_count(): K/V to the slow tier (synchronously),
     * k_hat to the proxy store, and K/V to the fast tier as resident.
     */
    void append_token(std::span<const double> k, std::span<const double> v, std::span<const double> k_hat);

    /// Makes `indices` (sorted, unique) the resident window, copying rows from
    /// the slow tier without counting them as transfers. Used at prefill.
    void set_resident(std::span<const std::size_t> indices);

private:
    friend struct CacheAccess;

    Matrix m_slow_k;
    Matrix m_slow_v;
    Matrix m_proxy;
    std::vector<std::size_t> m_resident;
    Matrix m_fast_k;
    Matrix m_fast_v;
    std::size_t m_k_budget;
    std::size_t m_lite_budget;
    std::uint64_t m_slow_reads = 0;
};

/// store . q_hat^T, one unnormalized score per stored token.
std::vector<double> proxy_scores(const Matrix& q_hat, const Matrix& proxy_store);

/**
 * Lite window = the lite_budget most recent indices ending at t; active = the
 * top k_budget of the remaining indices 0..t by score (lower index wins ties).
 */
SelectionSet select_active(std::span<const double> scores, std::size_t t, std::size_t k_budget,
                           std::size_t lite_budget);

/// K/V rows of a resident window, in ascending token order.
struct ResidentWindow {
    std::vector<std::size_t> indices;
    Matrix keys;
    Matrix values;
    std::size_t miss_count = 0;
};

/**
 * Reads the rows of sel.resident: hits from the fast tier, misses from the
 * slow tier. Updates stats (c_miss += misses, c_total += |resident|, one
 * per-step entry) and makes sel.resident the new fast tier. Throws
 * IndexOutOfRange for tokens not yet appended.
 */
ResidentWindow fetch_and_merge(TieredKVCache& cache, const SelectionSet& sel, CacheStats& stats);

/// c_miss / c_total; Undefined when nothing has been selected yet.
double miss_rate(const CacheStats& stats);

/// CSV with header step,selected,miss,hit,miss_rate.
void write_cache_stats_csv(std::ostream& out, const CacheStats& stats);

}  // namespace lrqk
