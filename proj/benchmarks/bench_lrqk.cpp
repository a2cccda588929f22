#include <benchmark/benchmark.h>

#include <cstddef>

#include "lrqk/lrqk.hpp"

namespace {

lrqk::HeadTensors bench_head(std::size_t l, std::size_t d) {
    lrqk::SyntheticSpec spec;
    spec.seq_len = l;
    spec.head_dim = d;
    spec.true_rank = d / 2;
    spec.seed = 1;
    return lrqk::gen_lowrank_qk(spec);
}

void BM_Prefill(benchmark::State& state) {
    const auto l = static_cast<std::size_t>(state.range(0));
    const auto head = bench_head(l, 128);
    lrqk::PrefillConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(lrqk::prefill_factorize(head.prefill_input(), cfg));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(l));
}
BENCHMARK(BM_Prefill)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_DecodeStep(benchmark::State& state) {
    const auto l = static_cast<std::size_t>(state.range(0));
    const std::size_t steps = 256;
    const auto head = bench_head(l + steps, 128);
    lrqk::SessionConfig cfg;
    cfg.k_budget = 256;
    cfg.lite_budget = 16;
    const lrqk::PrefillInput prompt{lrqk::head_rows(head.q, l), lrqk::head_rows(head.k, l)};
    auto session = lrqk::session_prefill(prompt, lrqk::head_rows(head.v, l), cfg);
    std::size_t next = l;
    for (auto _ : state) {
        if (next == l + steps) {
            state.PauseTiming();
            session = lrqk::session_prefill(prompt, lrqk::head_rows(head.v, l), cfg);
            next = l;
            state.ResumeTiming();
        }
        const lrqk::TokenStep step{lrqk::Matrix::row_vector(head.q.row(next)),
                                   lrqk::Matrix::row_vector(head.k.row(next)),
                                   lrqk::Matrix::row_vector(head.v.row(next))};
        benchmark::DoNotOptimize(lrqk::session_decode_step(session, step, false));
        ++next;
    }
}
BENCHMARK(BM_DecodeStep)->Arg(1024)->Arg(4096)->Unit(benchmark::kMicrosecond);

void BM_ProxySelect(benchmark::State& state) {
    const auto t = static_cast<std::size_t>(state.range(0));
    const auto head = bench_head(t, 32);
    const auto q_hat = lrqk::Matrix::row_vector(head.q.row(0));
    for (auto _ : state) {
        const auto scores = lrqk::proxy_scores(q_hat, head.k);
        benchmark::DoNotOptimize(lrqk::select_active(scores, t - 1, 2048, 64));
    }
}
BENCHMARK(BM_ProxySelect)->Arg(8192)->Arg(32768)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
