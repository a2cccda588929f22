#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lrqk/cache.hpp"
#include "lrqk/decode.hpp"
#include "lrqk/matrix.hpp"
#include "lrqk/prefill.hpp"
#include "lrqk/workload.hpp"

namespace lrqk {

struct SessionConfig {
    PrefillConfig prefill{};
    DecodeConfig decode{};
    std::size_t k_budget = 2048;
    std::size_t lite_budget = 64;

    void validate(std::size_t head_dim) const;
};

/// Pretty-printed JSON of every field, used for config echo and snapshots.
std::string session_config_json(const SessionConfig& cfg);

struct StepReport {
    std::size_t step = 0;   ///< 0-based decode step
    std::size_t token = 0;  ///< absolute token index
    std::size_t miss_count = 0;
    std::size_t selected_count = 0;
    /// Fraction of the exact top-k (over the full history) that is resident.
    std::optional<double> recall;
    /// Relative L2 error of the output against full-history attention.
    std::optional<double> output_err;
};

/// Mutable state of one head's session.
struct SessionState {
    SessionConfig config;
    LowRankFactors factors;
    TieredKVCache cache;
    CacheStats stats{};
    std::size_t steps_done = 0;
    std::vector<std::size_t> last_selection{};
    Matrix last_output{};
};

/// Factorizes the prompt and seeds the cache: all l tokens in the slow tier,
/// proxy store = a_k, fast tier = the last lite_budget prompt tokens.
SessionState session_prefill(const PrefillInput& input, const Matrix& values, const SessionConfig& cfg);

/**
 * One decode step: compress, update projections, append, score the full
 * proxy store, select, fetch/merge, then exact attention of q_t over the
 * resident rows. With track_quality the report also carries recall and output
 * error against full-history oracles.
 */
StepReport session_decode_step(SessionState& state, const TokenStep& step, bool track_quality = true);

struct SimulationResult {
    std::vector<StepReport> reports;
    CacheStats stats;
};

/// Prefill on rows [0, prompt_len) of `head`, then decode rows [prompt_len, prompt_len + steps).
SimulationResult run_simulation(const HeadTensors& head, std::size_t prompt_len, const SessionConfig& cfg,
                                std::size_t steps, bool track_quality = true);

struct SimulationSummary {
    std::size_t steps = 0;
    double mean_miss_rate = 0.0;     ///< mean of per-step miss rates
    double overall_miss_rate = 0.0;  ///< total c_miss / total c_total
    std::optional<double> mean_recall;
    std::optional<double> p50_output_err;
    std::optional<double> p95_output_err;
};

/// Pools the steps of one or more heads.
SimulationSummary summarize(std::span<const SimulationResult> results);

void write_report_csv(std::ostream& out, std::span<const StepReport> reports);
void write_summary_json(std::ostream& out, const SimulationSummary& summary, const SessionConfig& cfg);

}  // namespace lrqk
