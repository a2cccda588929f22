#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "lrqk/cache.hpp"
#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"
#include "support/oracles.hpp"

using namespace lrqk;
namespace t = lrqk::testing;

namespace {

using Index = std::vector<std::size_t>;

// Brute-force selection: lite = last lite_budget, active = full sort of the rest.
SelectionSet reference_selection(const std::vector<double>& scores, std::size_t step, std::size_t k_budget,
                                 std::size_t lite_budget) {
    SelectionSet sel;
    const std::size_t n = step + 1;
    const std::size_t lite_start = n > lite_budget ? n - lite_budget : 0;
    for (std::size_t i = lite_start; i < n; ++i) {
        sel.lite.push_back(i);
    }
    std::vector<std::size_t> order(lite_start);
    for (std::size_t i = 0; i < lite_start; ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(std::min(order.size(), k_budget));
    std::sort(order.begin(), order.end());
    sel.active = order;
    std::set<std::size_t> all(sel.active.begin(), sel.active.end());
    all.insert(sel.lite.begin(), sel.lite.end());
    sel.resident.assign(all.begin(), all.end());
    return sel;
}

TieredKVCache filled_cache(std::size_t n, std::size_t d, std::size_t r, std::mt19937_64& rng) {
    TieredKVCache cache(d, r, 4, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const Matrix k = t::random_matrix(1, d, rng);
        const Matrix v = t::random_matrix(1, d, rng);
        const Matrix kh = t::random_matrix(1, r, rng);
        cache.append_token(k.row(0), v.row(0), kh.row(0));
    }
    cache.set_resident({});
    return cache;
}

SelectionSet selection_of(Index omega) {
    SelectionSet sel;
    sel.active = omega;
    sel.resident = std::move(omega);
    return sel;
}

}  // namespace

TEST(ProxyScores, Examples) {
    const Matrix store = Matrix::identity(3);
    EXPECT_EQ(proxy_scores(Matrix::row_vector({0, 1, 0}), store), (std::vector<double>{0, 1, 0}));
    EXPECT_EQ(proxy_scores(Matrix(1, 3), store), (std::vector<double>{0, 0, 0}));

    std::mt19937_64 rng(1);
    const Matrix a = t::random_matrix(16, 4, rng);
    const Matrix q = t::random_matrix(1, 4, rng);
    const auto s = proxy_scores(q, a);
    ASSERT_EQ(s.size(), 16u);
    for (std::size_t i = 0; i < 16; ++i) {
        double ref = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            ref += a(i, j) * q(0, j);
        }
        EXPECT_NEAR(s[i], ref, 1e-12);
    }
}

TEST(SelectActive, EverythingFits) {
    const std::vector<double> scores{3, 1, 4, 1, 5};
    const auto sel = select_active(scores, 4, 3, 2);
    EXPECT_EQ(sel.resident, (Index{0, 1, 2, 3, 4}));
}

TEST(SelectActive, TieRule) {
    const std::vector<double> scores(6, 1.0);
    const auto sel = select_active(scores, 5, 2, 2);
    EXPECT_EQ(sel.lite, (Index{4, 5}));
    EXPECT_EQ(sel.active, (Index{0, 1}));
    EXPECT_EQ(sel.resident, (Index{0, 1, 4, 5}));
}

TEST(SelectActive, MatchesBruteForce) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t step = rng() % 80;
        const std::size_t k_budget = 1 + rng() % 12;
        const std::size_t lite = 1 + rng() % 6;
        std::vector<double> scores(step + 1);
        for (std::size_t i = 0; i <= step; ++i) {
            // Recency-biased scores with occasional ties.
            scores[i] = (trial % 3 == 0) ? static_cast<double>(rng() % 4) : n01(rng) + 0.05 * static_cast<double>(i);
        }
        const auto got = select_active(scores, step, k_budget, lite);
        const auto want = reference_selection(scores, step, k_budget, lite);
        EXPECT_EQ(got.lite, want.lite);
        EXPECT_EQ(got.active, want.active);
        EXPECT_EQ(got.resident, want.resident);

        std::vector<double> scaled = scores;
        for (double& s : scaled) {
            s *= 3.5;
        }
        EXPECT_EQ(select_active(scaled, step, k_budget, lite).resident, got.resident);
    }
}

TEST(TieredKVCache, AppendGrowsAndRoundTrips) {
    std::mt19937_64 rng(3);
    TieredKVCache cache(3, 2, 4, 2);
    const Matrix k = t::random_matrix(1, 3, rng);
    const Matrix v = t::random_matrix(1, 3, rng);
    const Matrix kh = t::random_matrix(1, 2, rng);
    cache.append_token(k.row(0), v.row(0), kh.row(0));
    EXPECT_EQ(cache.token_count(), 1u);
    EXPECT_EQ(cache.proxy_store().rows(), 1u);
    EXPECT_EQ(cache.proxy_store().cols(), 2u);

    for (int i = 0; i < 9; ++i) {
        const Matrix kk = t::random_matrix(1, 3, rng);
        cache.append_token(kk.row(0), kk.row(0), kh.row(0));
    }
    const Matrix last_k = t::random_matrix(1, 3, rng);
    const Matrix last_v = t::random_matrix(1, 3, rng);
    cache.append_token(last_k.row(0), last_v.row(0), kh.row(0));
    EXPECT_EQ(cache.token_count(), 11u);

    CacheStats stats;
    const auto win = fetch_and_merge(cache, selection_of({0, 10}), stats);
    EXPECT_EQ(win.keys.row_vector(win.keys.row(1)), last_k);
    EXPECT_EQ(Matrix::row_vector(win.values.row(1)), last_v);
    EXPECT_EQ(Matrix::row_vector(win.keys.row(0)), k);
    EXPECT_EQ(Matrix::row_vector(win.values.row(0)), v);
}

TEST(FetchAndMerge, Examples) {
    std::mt19937_64 rng(4);
    auto cache = filled_cache(8, 3, 2, rng);
    CacheStats stats;

    const auto cold = fetch_and_merge(cache, selection_of({0, 1, 2, 3}), stats);
    EXPECT_EQ(cold.miss_count, 4u);
    EXPECT_EQ(cache.resident_indices(), (Index{0, 1, 2, 3}));

    const auto uploaded = cache.slow_reads();
    const auto win = fetch_and_merge(cache, selection_of({2, 3, 4, 5}), stats);
    EXPECT_EQ(win.miss_count, 2u);
    EXPECT_EQ(cache.slow_reads() - uploaded, 2u);
    EXPECT_EQ(win.indices, (Index{2, 3, 4, 5}));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(Matrix::row_vector(win.keys.row(i)), Matrix::row_vector(cache.slow_keys().row(2 + i)));
    }

    const auto hit = fetch_and_merge(cache, selection_of({3, 4}), stats);
    EXPECT_EQ(hit.miss_count, 0u);
    EXPECT_EQ(stats.c_miss, 6u);
    EXPECT_EQ(stats.c_total, 10u);
    ASSERT_EQ(stats.per_step.size(), 3u);
    EXPECT_EQ(stats.per_step[1].step, 1u);
    EXPECT_EQ(stats.per_step[1].miss_count, 2u);
    EXPECT_EQ(stats.per_step[1].selected_count, 4u);

    try {
        fetch_and_merge(cache, selection_of({8}), stats);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
    }
}

TEST(FetchAndMerge, ConservationResidencyBudget) {
    std::mt19937_64 rng(5);
    const std::size_t d = 4, r = 2, k_budget = 5, lite = 3;
    TieredKVCache cache(d, r, k_budget, lite);
    CacheStats stats;
    Index prev;
    std::uint64_t want_miss = 0, want_total = 0;
    for (std::size_t step = 0; step < 120; ++step) {
        const Matrix k = t::random_matrix(1, d, rng);
        const Matrix kh = t::random_matrix(1, r, rng);
        cache.append_token(k.row(0), k.row(0), kh.row(0));
        // The appended token joins the fast tier.
        prev.push_back(step);
        EXPECT_EQ(cache.resident_indices(), prev);
        EXPECT_LE(cache.resident_indices().size(), k_budget + lite + 1);

        const Matrix qh = t::random_matrix(1, r, rng);
        const auto sel = select_active(proxy_scores(qh, cache.proxy_store()), step, k_budget, lite);
        const auto win = fetch_and_merge(cache, sel, stats);

        want_miss += t::set_difference_size(sel.resident, prev);
        want_total += sel.resident.size();
        EXPECT_EQ(stats.c_miss, want_miss);
        EXPECT_EQ(stats.c_total, want_total);
        EXPECT_EQ(cache.resident_indices(), sel.resident);
        EXPECT_EQ(win.indices, sel.resident);
        EXPECT_LE(cache.resident_indices().size(), k_budget + lite + 1);
        EXPECT_EQ(cache.proxy_store().rows(), cache.token_count());
        prev = sel.resident;
    }
    // Everything stays in the slow tier.
    Index all(cache.token_count());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }
    CacheStats scratch;
    EXPECT_EQ(fetch_and_merge(cache, selection_of(all), scratch).indices.size(), 120u);
}

TEST(MissRate, Examples) {
    CacheStats stats;
    EXPECT_THROW(miss_rate(stats), Error);
    stats.c_miss = 2;
    stats.c_total = 5;
    EXPECT_DOUBLE_EQ(miss_rate(stats), 0.4);
    stats.c_miss = 0;
    EXPECT_DOUBLE_EQ(miss_rate(stats), 0.0);
}

TEST(CacheStatsCsv, Layout) {
    CacheStats stats;
    stats.per_step = {{0, 1, 4}, {1, 0, 2}};
    std::ostringstream out;
    write_cache_stats_csv(out, stats);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "step,selected,miss,hit,miss_rate");
    std::getline(in, line);
    EXPECT_EQ(line, "0,4,1,3,0.25");
    std::getline(in, line);
    EXPECT_EQ(line, "1,2,0,2,0");
}
