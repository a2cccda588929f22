#include "lrqk/session.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"
#include "lrqk/oracle.hpp"

namespace lrqk {

namespace {

nlohmann::json config_to_json(const SessionConfig& cfg) {
    return nlohmann::json{
        {"rank", cfg.prefill.rank},
        {"topk", cfg.k_budget},
        {"lite", cfg.lite_budget},
        {"lambda_pq", cfg.prefill.lambda_q},
        {"lambda_pk", cfg.prefill.lambda_k},
        {"lambda_d1", cfg.decode.lambda_1},
        {"lambda_d2", cfg.decode.lambda_2},
        {"prefill_max_iter", cfg.prefill.max_iter},
        {"prefill_tol", cfg.prefill.tol},
        {"decode_max_iter", cfg.decode.max_iter},
        {"decode_tol", cfg.decode.tol},
        {"init", std::string(to_string(cfg.prefill.init.kind))},
        {"init_seed", cfg.prefill.init.seed},
    };
}

// Nearest-rank percentile of a non-empty sample.
double percentile(std::vector<double> xs, double p) {
    std::sort(xs.begin(), xs.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(xs.size())));
    return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

}  // namespace

void SessionConfig::validate(std::size_t head_dim) const {
    prefill.validate(head_dim);
    decode.validate();
    if (k_budget == 0 || lite_budget == 0) {
        throw Error(ErrorCode::InvalidArgument, "session budgets must be >= 1");
    }
}

std::string session_config_json(const SessionConfig& cfg) {
    return config_to_json(cfg).dump(2);
}

SessionState session_prefill(const PrefillInput& input, const Matrix& values, const SessionConfig& cfg) {
    input.validate();
    cfg.validate(input.head_dim());
    if (values.rows() != input.seq_len() || values.cols() != input.head_dim()) {
        throw Error(ErrorCode::InvalidArgument, "session_prefill: V must match Q/K shape");
    }

    LowRankFactors factors = prefill_factorize(input, cfg.prefill);
    TieredKVCache cache(input.head_dim(), cfg.prefill.rank, cfg.k_budget, cfg.lite_budget);
    for (std::size_t i = 0; i < input.seq_len(); ++i) {
        cache.append_token(input.k.row(i), values.row(i), factors.a_k.row(i));
    }
    const std::size_t l = input.seq_len();
    std::vector<std::size_t> lite(std::min(l, cfg.lite_budget));
    std::iota(lite.begin(), lite.end(), l - lite.size());
    cache.set_resident(lite);

    return SessionState{cfg, std::move(factors), std::move(cache)};
}

StepReport session_decode_step(SessionState& state, const TokenStep& step, bool track_quality) {
    step.validate();
    auto& cache = state.cache;
    if (step.q.cols() != cache.head_dim()) {
        throw Error(ErrorCode::InvalidArgument, "decode step head dim differs from the session");
    }
    const auto& cfg = state.config;

    // The constraint set is the window resident before this token arrives.
    CompressResult comp =
        decode_compress(step, state.factors, cache.resident_proxies(), cache.resident_keys(), cfg.decode);
    update_projections(step, comp.token, state.factors, comp.workspace);

    cache.append_token(step.k.row(0), step.v.row(0), comp.token.k_hat.row(0));
    const std::size_t t = cache.token_count() - 1;

    const std::vector<double> scores = proxy_scores(comp.token.q_hat, cache.proxy_store());
    const SelectionSet sel = select_active(scores, t, cfg.k_budget, cfg.lite_budget);
    const ResidentWindow window = fetch_and_merge(cache, sel, state.stats);
    AttentionResult attn = exact_attention(step.q, window.keys, window.values);

    StepReport report;
    report.step = state.steps_done++;
    report.token = t;
    report.miss_count = window.miss_count;
    report.selected_count = window.indices.size();

    if (track_quality) {
        const auto exact = exact_topk(step.q, cache.slow_keys(), cfg.k_budget);
        report.recall = selection_recall(window.indices, exact);
        const AttentionResult full = exact_attention(step.q, cache.slow_keys(), cache.slow_values());
        const double ref = fro_norm(full.output);
        const double diff = fro_norm(attn.output - full.output);
        report.output_err = ref > 0.0 ? diff / ref : diff;
    }

    state.last_selection = window.indices;
    state.last_output = std::move(attn.output);
    return report;
}

SimulationResult run_simulation(const HeadTensors& head, std::size_t prompt_len, const SessionConfig& cfg,
                                std::size_t steps, bool track_quality) {
    if (prompt_len == 0 || prompt_len + steps > head.seq_len()) {
        throw Error(ErrorCode::InvalidArgument, "run_simulation: need 1 <= prompt_len and prompt_len + steps <= " +
                                                    std::to_string(head.seq_len()));
    }
    const PrefillInput prompt{head_rows(head.q, prompt_len), head_rows(head.k, prompt_len)};
    SessionState state = session_prefill(prompt, head_rows(head.v, prompt_len), cfg);

    SimulationResult result;
    result.reports.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = prompt_len + s;
        const TokenStep tok{Matrix::row_vector(head.q.row(t)), Matrix::row_vector(head.k.row(t)),
                            Matrix::row_vector(head.v.row(t))};
        result.reports.push_back(session_decode_step(state, tok, track_quality));
    }
    result.stats = std::move(state.stats);
    return result;
}

SimulationSummary summarize(std::span<const SimulationResult> results) {
    SimulationSummary s;
    std::uint64_t miss = 0;
    std::uint64_t total = 0;
    double rate_sum = 0.0;
    std::vector<double> recalls;
    std::vector<double> errs;
    for (const auto& r : results) {
        miss += r.stats.c_miss;
        total += r.stats.c_total;
        for (const auto& rep : r.reports) {
            ++s.steps;
            if (rep.selected_count > 0) {
                rate_sum += static_cast<double>(rep.miss_count) / static_cast<double>(rep.selected_count);
            }
            if (rep.recall) {
                recalls.push_back(*rep.recall);
            }
            if (rep.output_err) {
                errs.push_back(*rep.output_err);
            }
        }
    }
    if (s.steps > 0) {
        s.mean_miss_rate = rate_sum / static_cast<double>(s.steps);
    }
    if (total > 0) {
        s.overall_miss_rate = static_cast<double>(miss) / static_cast<double>(total);
    }
    if (!recalls.empty()) {
        s.mean_recall = std::accumulate(recalls.begin(), recalls.end(), 0.0) / static_cast<double>(recalls.size());
    }
    if (!errs.empty()) {
        s.p50_output_err = percentile(errs, 0.50);
        s.p95_output_err = percentile(errs, 0.95);
    }
    return s;
}

void write_report_csv(std::ostream& out, std::span<const StepReport> reports) {
    out << "step,selected,miss,recall,output_err\n" << std::setprecision(17);
    for (const auto& r : reports) {
        out << r.step << ',' << r.selected_count << ',' << r.miss_count << ',';
        if (r.recall) {
            out << *r.recall;
        }
        out << ',';
        if (r.output_err) {
            out << *r.output_err;
        }
        out << '\n';
    }
}

void write_summary_json(std::ostream& out, const SimulationSummary& summary, const SessionConfig& cfg) {
    const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j{
        {"steps", summary.steps},
        {"mean_miss_rate", summary.mean_miss_rate},
        {"overall_miss_rate", summary.overall_miss_rate},
        {"mean_recall", opt(summary.mean_recall)},
        {"p50_output_err", opt(summary.p50_output_err)},
        {"p95_output_err", opt(summary.p95_output_err)},
        {"config", config_to_json(cfg)},
    };
    out << j.dump(2) << '\n';
}

}  // namespace lrqk
