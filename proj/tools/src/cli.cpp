#include "lrqk_tools/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "lrqk/lrqk.hpp"

namespace lrqk::tools {

namespace fs = std::filesystem;

namespace {

struct InputOptions {
    SyntheticSpec spec{};
    std::size_t heads = 1;
    std::string trace;
    std::vector<CLI::Option*> synthetic_flags;
};

struct Options {
    InputOptions input;
    SessionConfig session;
    std::string init = "randn";
    std::string out_dir = ".";
    std::size_t steps = 64;
    std::size_t prompt_len = 0;
    bool print_config = false;
    bool no_quality = false;
    std::string tensor = "k";
    std::size_t window = 16;
    std::string trace_name = "trace.lrqk";
};

void add_input_options(CLI::App& cmd, InputOptions& in) {
    auto& f = in.synthetic_flags;
    f.push_back(cmd.add_option("--seq-len", in.spec.seq_len, "Synthetic sequence length")->capture_default_str());
    f.push_back(cmd.add_option("--head-dim", in.spec.head_dim, "Synthetic head dimension")->capture_default_str());
    f.push_back(cmd.add_option("--true-rank", in.spec.true_rank, "Synthetic Q/K rank")->capture_default_str());
    f.push_back(cmd.add_option("--decay", in.spec.decay, "Singular value ratio rho")->capture_default_str());
    f.push_back(
        cmd.add_option("--recency", in.spec.recency_strength, "Recency injection strength")->capture_default_str());
    f.push_back(cmd.add_option("--scale", in.spec.scale, "Leading singular value")->capture_default_str());
    f.push_back(cmd.add_option("--seed", in.spec.seed, "Generator seed; head h uses seed + h")->capture_default_str());
    f.push_back(cmd.add_option("--heads", in.heads, "Number of synthetic heads")->capture_default_str());
    cmd.add_option("--trace", in.trace, "Read heads from a trace file instead of generating them");
}

void add_session_options(CLI::App& cmd, Options& o) {
    auto& s = o.session;
    cmd.add_option("--rank", s.prefill.rank, "Factor rank r")->capture_default_str();
    cmd.add_option("--topk", s.k_budget, "Active token budget")->capture_default_str();
    cmd.add_option("--lite", s.lite_budget, "Recent token budget")->capture_default_str();
    cmd.add_option("--max-iter", s.prefill.max_iter, "Iteration cap for prefill and decode")->capture_default_str();
    cmd.add_option("--tol", s.prefill.tol, "Convergence tolerance for prefill and decode")->capture_default_str();
    cmd.add_option("--lambda-pq", s.prefill.lambda_q, "Prefill Q reconstruction weight")->capture_default_str();
    cmd.add_option("--lambda-pk", s.prefill.lambda_k, "Prefill K reconstruction weight")->capture_default_str();
    cmd.add_option("--lambda-d1", s.decode.lambda_1, "Decode score weight")->capture_default_str();
    cmd.add_option("--lambda-d2", s.decode.lambda_2, "Decode resident-score weight")->capture_default_str();
    cmd.add_option("--init", o.init, "Factor initialization")
        ->check(CLI::IsMember({"randn", "top", "topcol"}))
        ->capture_default_str();
    cmd.add_option("--init-seed", s.prefill.init.seed, "Seed of the randn initialization")->capture_default_str();
    cmd.add_flag("--print-config", o.print_config, "Print the resolved configuration as JSON and exit");
}

void finalize_session(Options& o) {
    o.session.prefill.init.kind = parse_init_kind(o.init);
    o.session.decode.max_iter = o.session.prefill.max_iter;
    o.session.decode.tol = o.session.prefill.tol;
}

class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<HeadTensors> load_heads(const InputOptions& in) {
    if (!in.trace.empty()) {
        for (const auto* opt : in.synthetic_flags) {
            if (opt->count() > 0) {
                throw UsageError("--trace cannot be combined with " + opt->get_name());
            }
        }
        return load_trace(in.trace).heads();
    }
    if (in.heads == 0) {
        throw UsageError("--heads must be >= 1");
    }
    std::vector<HeadTensors> heads;
    heads.reserve(in.heads);
    for (std::size_t h = 0; h < in.heads; ++h) {
        SyntheticSpec spec = in.spec;
        spec.seed += h;
        heads.push_back(gen_recency_biased(spec));
    }
    return heads;
}

// Runs job(h) for every head on a small pool; the first exception is rethrown.
void for_each_head(std::size_t count, const std::function<void(std::size_t)>& job) {
    const std::size_t workers = worker_count(count);
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    auto work = [&] {
        for (std::size_t h = next++; h < count; h = next++) {
            try {
                job(h);
            } catch (...) {
                errors[h] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < workers; ++i) {
            pool.emplace_back(work);
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

fs::path prepare_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create output directory " + dir + ": " + ec.message());
    }
    return fs::path(dir);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    out << std::setprecision(17);
    return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
    out.close();
    if (!out) {
        throw Error(ErrorCode::Io, "failed writing " + path.string());
    }
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
    auto out = open_out(path);
    writer(out);
    close_out(out, path);
}

// ||Q K^T||_F^2 without forming the l x l product.
double score_energy(const PrefillInput& in) {
    const Matrix gq = gram(in.q);
    const Matrix gk = gram(in.k);
    double s = 0.0;
    for (std::size_t i = 0; i < gq.size(); ++i) {
        s += gq.data()[i] * gk.data()[i];
    }
    return s;
}

double relative(double num_sq, double den_sq) {
    return den_sq > 0.0 ? std::sqrt(num_sq / den_sq) : std::sqrt(num_sq);
}

int cmd_factorize(const Options& o, std::ostream& out) {
    const auto heads = load_heads(o.input);
    for (const auto& h : heads) {
        o.session.validate(h.head_dim());
    }
    struct Result {
        std::vector<SweepInfo> sweeps;
        double q_rel = 0.0, k_rel = 0.0, qk_rel = 0.0, lagrangian = 0.0;
    };
    std::vector<Result> results(heads.size());
    for_each_head(heads.size(), [&](std::size_t h) {
        const PrefillInput in = heads[h].prefill_input();
        Result& r = results[h];
        const auto f = prefill_factorize(in, o.session.prefill, [&](const SweepInfo& s) { r.sweeps.push_back(s); });
        r.q_rel = relative(fro_norm_sq(in.q - matmul(f.a_q, f.b_q)), fro_norm_sq(in.q));
        r.k_rel = relative(fro_norm_sq(in.k - matmul(f.a_k, f.b_k)), fro_norm_sq(in.k));
        PrefillConfig score_only = o.session.prefill;
        score_only.lambda_q = 0.0;
        score_only.lambda_k = 0.0;
        r.qk_rel = relative(2.0 * lagrangian_value(in, f, score_only), score_energy(in));
        r.lagrangian = lagrangian_value(in, f, o.session.prefill);
    });

    const fs::path dir = prepare_out_dir(o.out_dir);
    write_file(dir / "trajectory.csv", [&](std::ostream& csv) {
        csv << "head,sweep,lagrangian,mean_sq_change\n";
        for (std::size_t h = 0; h < results.size(); ++h) {
            for (const auto& s : results[h].sweeps) {
                csv << h << ',' << s.sweep << ',' << s.lagrangian << ',' << s.mean_sq_change << '\n';
            }
        }
    });
    write_file(dir / "residuals.csv", [&](std::ostream& csv) {
        csv << "head,sweeps,q_rel,k_rel,qk_rel,lagrangian\n";
        for (std::size_t h = 0; h < results.size(); ++h) {
            const auto& r = results[h];
            csv << h << ',' << r.sweeps.size() << ',' << r.q_rel << ',' << r.k_rel << ',' << r.qk_rel << ','
                << r.lagrangian << '\n';
        }
    });
    for (std::size_t h = 0; h < results.size(); ++h) {
        out << "head " << h << ": sweeps=" << results[h].sweeps.size() << " q_rel=" << results[h].q_rel
            << " k_rel=" << results[h].k_rel << " qk_rel=" << results[h].qk_rel << '\n';
    }
    return kExitOk;
}

void write_miss_histogram(std::ostream& csv, const std::vector<SimulationResult>& results) {
    constexpr std::size_t kBins = 10;
    std::vector<std::size_t> counts(kBins, 0);
    for (const auto& r : results) {
        for (const auto& s : r.stats.per_step) {
            if (s.selected_count == 0) {
                continue;
            }
            const double rate = static_cast<double>(s.miss_count) / static_cast<double>(s.selected_count);
            counts[std::min(kBins - 1, static_cast<std::size_t>(rate * kBins))] += 1;
        }
    }
    csv << "bin_lo,bin_hi,count\n" << std::setprecision(6);
    for (std::size_t b = 0; b < kBins; ++b) {
        csv << static_cast<double>(b) / kBins << ',' << static_cast<double>(b + 1) / kBins << ',' << counts[b]
            << '\n';
    }
}

int cmd_simulate(const Options& o, std::ostream& out) {
    const auto heads = load_heads(o.input);
    std::vector<std::size_t> prompt(heads.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
        o.session.validate(heads[h].head_dim());
        const std::size_t l = heads[h].seq_len();
        if (o.steps >= l) {
            throw UsageError("--steps " + std::to_string(o.steps) + " leaves no prompt in a sequence of " +
                             std::to_string(l));
        }
        prompt[h] = o.prompt_len == 0 ? l - o.steps : o.prompt_len;
        if (prompt[h] + o.steps > l) {
            throw UsageError("--prompt-len + --steps exceeds the sequence length " + std::to_string(l));
        }
    }

    std::vector<SimulationResult> results(heads.size());
    for_each_head(heads.size(), [&](std::size_t h) {
        results[h] = run_simulation(heads[h], prompt[h], o.session, o.steps, !o.no_quality);
    });

    const fs::path dir = prepare_out_dir(o.out_dir);
    for (std::size_t h = 0; h < results.size(); ++h) {
        const std::string tag = "_h" + std::to_string(h) + ".csv";
        write_file(dir / ("report" + tag), [&](std::ostream& csv) { write_report_csv(csv, results[h].reports); });
        write_file(dir / ("cache" + tag), [&](std::ostream& csv) { write_cache_stats_csv(csv, results[h].stats); });
    }
    write_file(dir / "miss_hist.csv", [&](std::ostream& csv) { write_miss_histogram(csv, results); });
    const auto summary = summarize(results);
    write_file(dir / "summary.json", [&](std::ostream& js) { write_summary_json(js, summary, o.session); });

    out << "steps=" << summary.steps << " heads=" << heads.size() << " mean_miss_rate=" << summary.mean_miss_rate
        << " overall_miss_rate=" << summary.overall_miss_rate;
    if (summary.mean_recall) {
        out << " mean_recall=" << *summary.mean_recall << " p95_output_err=" << *summary.p95_output_err;
    }
    out << '\n';
    return kExitOk;
}

std::vector<double> mean_of(const std::vector<std::vector<double>>& rows) {
    std::vector<double> mean(rows.front().size(), 0.0);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean[i] += r[i];
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(rows.size());
    }
    return mean;
}

int cmd_spectrum(const Options& o, std::ostream& out) {
    const auto heads = load_heads(o.input);
    for (std::size_t h = 1; h < heads.size(); ++h) {
        if (heads[h].head_dim() != heads[0].head_dim() || heads[h].seq_len() != heads[0].seq_len()) {
            throw UsageError("spectrum needs heads of equal shape");
        }
    }
    std::vector<std::vector<double>> sq(heads.size()), sk(heads.size());
    for_each_head(heads.size(), [&](std::size_t h) {
        sq[h] = singular_spectrum(heads[h].q);
        sk[h] = singular_spectrum(heads[h].k);
    });
    const auto mean = mean_of(o.tensor == "q" ? sq : sk);

    const fs::path dir = prepare_out_dir(o.out_dir);
    write_file(dir / "spectrum.csv", [&](std::ostream& csv) { write_spectrum_csv(csv, mean); });
    write_file(dir / "spectrum_heads.csv", [&](std::ostream& csv) {
        csv << "head,tensor,index,sigma\n";
        for (std::size_t h = 0; h < heads.size(); ++h) {
            for (std::size_t i = 0; i < sq[h].size(); ++i) {
                csv << h << ",q," << i << ',' << sq[h][i] << '\n';
            }
            for (std::size_t i = 0; i < sk[h].size(); ++i) {
                csv << h << ",k," << i << ',' << sk[h][i] << '\n';
            }
        }
    });
    out << "sigma_0=" << mean.front() << " sigma_last=" << mean.back() << '\n';
    return kExitOk;
}

int cmd_recency(const Options& o, std::ostream& out) {
    const auto heads = load_heads(o.input);
    std::vector<std::vector<double>> profiles(heads.size());
    for_each_head(heads.size(), [&](std::size_t h) {
        profiles[h] = neighbor_attention_profile(heads[h].q, heads[h].k, o.window);
    });
    const auto mean = mean_of(profiles);

    const fs::path dir = prepare_out_dir(o.out_dir);
    write_file(dir / "profile.csv", [&](std::ostream& csv) { write_profile_csv(csv, mean); });
    write_file(dir / "profile_heads.csv", [&](std::ostream& csv) {
        csv << "head,offset,weight\n";
        const auto w = static_cast<long long>(o.window);
        for (std::size_t h = 0; h < profiles.size(); ++h) {
            for (long long i = 0; i < w; ++i) {
                csv << h << ',' << (i - w + 1) << ',' << profiles[h][static_cast<std::size_t>(i)] << '\n';
            }
        }
    });
    const auto peak = std::max_element(mean.begin(), mean.end()) - mean.begin();
    out << "peak_offset=" << (peak - static_cast<long long>(o.window) + 1) << '\n';
    return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
    const auto heads = load_heads(o.input);
    const fs::path path = prepare_out_dir(o.out_dir) / o.trace_name;
    save_trace(path, TraceFile::from_heads(heads));
    out << "wrote " << path.string() << '\n';
    return kExitOk;
}

int map_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::RankTooLarge:
        case ErrorCode::WindowTooLarge:
            return kExitUsage;
        default:
            return kExitFailure;
    }
}

}  // namespace

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LRQK_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) {
            n = static_cast<std::size_t>(v);
        }
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Low-rank query/key attention simulator", "lrqk"};
    app.require_subcommand(1);
    Options o;

    auto* factorize = app.add_subcommand("factorize", "Prefill factorization; writes trajectory.csv, residuals.csv");
    add_input_options(*factorize, o.input);
    add_session_options(*factorize, o);

    auto* simulate = app.add_subcommand("simulate", "Prefill then decode; writes per-head reports and summary.json");
    add_input_options(*simulate, o.input);
    add_session_options(*simulate, o);
    simulate->add_option("--steps", o.steps, "Decode steps per head")->capture_default_str();
    simulate->add_option("--prompt-len", o.prompt_len, "Prompt length (default: seq_len - steps)");
    simulate->add_flag("--no-quality", o.no_quality, "Skip recall and output error against full history");

    auto* spectrum = app.add_subcommand("spectrum", "Singular spectra of Q and K; writes spectrum.csv");
    add_input_options(*spectrum, o.input);
    spectrum->add_option("--tensor", o.tensor, "Tensor averaged into spectrum.csv")
        ->check(CLI::IsMember({"q", "k"}))
        ->capture_default_str();

    auto* recency = app.add_subcommand("recency", "Neighbor attention profile; writes profile.csv");
    add_input_options(*recency, o.input);
    recency->add_option("--window", o.window, "Trailing window size")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Write synthetic heads to a trace file");
    add_input_options(*synth, o.input);
    synth->add_option("--name", o.trace_name, "Trace file name inside --out")->capture_default_str();

    for (auto* cmd : {factorize, simulate, spectrum, recency, synth}) {
        cmd->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    try {
        finalize_session(o);
        if (o.print_config) {
            out << session_config_json(o.session) << '\n';
            return kExitOk;
        }
        if (factorize->parsed()) {
            return cmd_factorize(o, out);
        }
        if (simulate->parsed()) {
            return cmd_simulate(o, out);
        }
        if (spectrum->parsed()) {
            return cmd_spectrum(o, out);
        }
        if (recency->parsed()) {
            return cmd_recency(o, out);
        }
        return cmd_synth(o, out);
    } catch (const UsageError& e) {
        err << "lrqk: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "lrqk: " << e.what() << '\n';
        return map_error(e.code());
    } catch (const std::exception& e) {
        err << "lrqk: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace lrqk::tools
