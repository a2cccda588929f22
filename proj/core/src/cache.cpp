#include "lrqk/cache.hpp"

#include <algorithm>
#include <iomanip>
#include <string>

#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"

namespace lrqk {

TieredKVCache::TieredKVCache(std::size_t head_dim, std::size_t rank, std::size_t k_budget, std::size_t lite_budget)
    : m_slow_k(0, head_dim),
      m_slow_v(0, head_dim),
      m_proxy(0, rank),
      m_fast_k(0, head_dim),
      m_fast_v(0, head_dim),
      m_k_budget(k_budget),
      m_lite_budget(lite_budget) {
    if (head_dim == 0 || rank == 0) {
        throw Error(ErrorCode::InvalidArgument, "cache: head_dim and rank must be >= 1");
    }
    if (k_budget == 0 || lite_budget == 0) {
        throw Error(ErrorCode::InvalidArgument, "cache: budgets must be >= 1");
    }
}

Matrix TieredKVCache::resident_proxies() const {
    return select_rows(m_proxy, m_resident);
}

void TieredKVCache::append_token(std::span<const double> k, std::span<const double> v,
                                 std::span<const double> k_hat) {
    if (k.size() != head_dim() || v.size() != head_dim() || k_hat.size() != rank()) {
        throw Error(ErrorCode::InvalidArgument, "append_token: row widths do not match the cache");
    }
    const std::size_t t = token_count();
    m_slow_k.append_row(k);
    m_slow_v.append_row(v);
    m_proxy.append_row(k_hat);
    // t exceeds every resident index, so the window stays sorted.
    m_resident.push_back(t);
    m_fast_k.append_row(k);
    m_fast_v.append_row(v);
}

void TieredKVCache::set_resident(std::span<const std::size_t> indices) {
    if (!std::is_sorted(indices.begin(), indices.end()) ||
        std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
        throw Error(ErrorCode::InvalidArgument, "set_resident: indices must be sorted and unique");
    }
    m_fast_k = select_rows(m_slow_k, indices);
    m_fast_v = select_rows(m_slow_v, indices);
    m_resident.assign(indices.begin(), indices.end());
}

struct CacheAccess {
    static ResidentWindow fetch(TieredKVCache& cache, const SelectionSet& sel, CacheStats& stats) {
        const auto& want = sel.resident;
        if (!want.empty() && want.back() >= cache.token_count()) {
            throw Error(ErrorCode::IndexOutOfRange, "fetch: token " + std::to_string(want.back()) +
                                                        " not in slow tier of " +
                                                        std::to_string(cache.token_count()) + " tokens");
        }
        if (!std::is_sorted(want.begin(), want.end())) {
            throw Error(ErrorCode::InvalidArgument, "fetch: selection must be sorted");
        }

        const std::size_t d = cache.head_dim();
        ResidentWindow out{want, Matrix(0, d), Matrix(0, d), 0};
        out.keys.reserve_rows(want.size());
        out.values.reserve_rows(want.size());

        // Both lists are sorted; walk them together.
        const auto& have = cache.m_resident;
        std::size_t h = 0;
        for (std::size_t idx : want) {
            while (h < have.size() && have[h] < idx) {
                ++h;
            }
            if (h < have.size() && have[h] == idx) {
                out.keys.append_row(cache.m_fast_k.row(h));
                out.values.append_row(cache.m_fast_v.row(h));
            } else {
                out.keys.append_row(cache.m_slow_k.row(idx));
                out.values.append_row(cache.m_slow_v.row(idx));
                ++out.miss_count;
            }
        }

        cache.m_slow_reads += out.miss_count;
        stats.c_miss += out.miss_count;
        stats.c_total += want.size();
        stats.per_step.push_back(StepCacheStat{stats.per_step.size(), out.miss_count, want.size()});

        cache.m_resident = want;
        cache.m_fast_k = out.keys;
        cache.m_fast_v = out.values;
        return out;
    }
};

ResidentWindow fetch_and_merge(TieredKVCache& cache, const SelectionSet& sel, CacheStats& stats) {
    return CacheAccess::fetch(cache, sel, stats);
}

std::vector<double> proxy_scores(const Matrix& q_hat, const Matrix& proxy_store) {
    if (q_hat.rows() != 1 || q_hat.cols() != proxy_store.cols()) {
        throw Error(ErrorCode::InvalidArgument, "proxy_scores: q_hat must be 1 x r matching the store");
    }
    std::vector<double> scores(proxy_store.rows());
    const auto q = q_hat.row(0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = dot(proxy_store.row(i), q);
    }
    return scores;
}

SelectionSet select_active(std::span<const double> scores, std::size_t t, std::size_t k_budget,
                           std::size_t lite_budget) {
    if (scores.size() < t + 1) {
        throw Error(ErrorCode::InvalidArgument, "select_active: scores must cover tokens 0..t");
    }
    if (k_budget == 0 || lite_budget == 0) {
        throw Error(ErrorCode::InvalidArgument, "select_active: budgets must be >= 1");
    }
    SelectionSet sel;
    const std::size_t count = t + 1;
    const std::size_t lite_start = count > lite_budget ? count - lite_budget : 0;
    for (std::size_t i = lite_start; i < count; ++i) {
        sel.lite.push_back(i);
    }
    if (lite_start > 0) {
        sel.active = topk_indices(scores.first(lite_start), k_budget);
    }
    // Active indices all precede the lite window.
    sel.resident = sel.active;
    sel.resident.insert(sel.resident.end(), sel.lite.begin(), sel.lite.end());
    return sel;
}

double miss_rate(const CacheStats& stats) {
    if (stats.c_total == 0) {
        throw Error(ErrorCode::Undefined, "miss rate with zero selected rows");
    }
    return static_cast<double>(stats.c_miss) / static_cast<double>(stats.c_total);
}

void write_cache_stats_csv(std::ostream& out, const CacheStats& stats) {
    out << "step,selected,miss,hit,miss_rate\n";
    out << std::setprecision(17);
    for (const auto& s : stats.per_step) {
        const double rate =
            s.selected_count == 0 ? 0.0 : static_cast<double>(s.miss_count) / static_cast<double>(s.selected_count);
        out << s.step << ',' << s.selected_count << ',' << s.miss_count << ',' << (s.selected_count - s.miss_count)
            << ',' << rate << '\n';
    }
}

}  // namespace lrqk
