#include "lrqk/workload.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <random>
#include <string>

#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"

namespace lrqk {

namespace {

constexpr std::size_t kRecencyHorizon = 16;

Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& x : m.data()) {
        x = normal(rng);
    }
    return m;
}

// Orthonormal columns via modified Gram-Schmidt, run twice for stability.
Matrix random_orthonormal(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    Matrix a = gaussian(n, k, rng);
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t p = 0; p < j; ++p) {
                double proj = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    proj += a(i, p) * a(i, j);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    a(i, j) -= proj * a(i, p);
                }
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                norm += a(i, j) * a(i, j);
            }
            norm = std::sqrt(norm);
            for (std::size_t i = 0; i < n; ++i) {
                a(i, j) /= norm;
            }
        }
    }
    return a;
}

Matrix lowrank(const SyntheticSpec& spec, std::mt19937_64& rng) {
    const Matrix u = random_orthonormal(spec.seq_len, spec.true_rank, rng);
    Matrix w = random_orthonormal(spec.head_dim, spec.true_rank, rng);
    double sigma = spec.scale;
    for (std::size_t j = 0; j < spec.true_rank; ++j) {
        for (std::size_t i = 0; i < spec.head_dim; ++i) {
            w(i, j) *= sigma;
        }
        sigma *= spec.decay;
    }
    return matmul_nt(u, w);
}

}  // namespace

void SyntheticSpec::validate() const {
    if (seq_len == 0 || head_dim == 0 || true_rank == 0) {
        throw Error(ErrorCode::InvalidArgument, "synthetic spec: sizes must be >= 1");
    }
    if (true_rank > head_dim || true_rank > seq_len) {
        throw Error(ErrorCode::RankTooLarge, "synthetic spec: true rank " + std::to_string(true_rank) +
                                                 " exceeds min(seq_len, head_dim)");
    }
    if (!(decay > 0.0 && decay <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "synthetic spec: decay must lie in (0, 1]");
    }
    if (!(recency_strength >= 0.0) || !std::isfinite(recency_strength)) {
        throw Error(ErrorCode::InvalidArgument, "synthetic spec: recency strength must be >= 0");
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw Error(ErrorCode::InvalidArgument, "synthetic spec: scale must be > 0");
    }
}

HeadTensors gen_lowrank_qk(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    HeadTensors h;
    h.q = lowrank(spec, rng);
    h.k = lowrank(spec, rng);
    h.v = gaussian(spec.seq_len, spec.head_dim, rng);
    return h;
}

HeadTensors gen_recency_biased(const SyntheticSpec& spec) {
    HeadTensors h = gen_lowrank_qk(spec);
    if (spec.recency_strength == 0.0) {
        return h;
    }
    const std::size_t l = spec.seq_len;
    const std::size_t d = spec.head_dim;
    const double gain = spec.recency_strength * std::sqrt(static_cast<double>(d));

    std::vector<double> inv_norm_sq(l, 0.0);
    for (std::size_t j = 0; j < l; ++j) {
        const double n2 = fro_norm_sq(Matrix::row_vector(h.q.row(j)));
        inv_norm_sq[j] = n2 > 0.0 ? 1.0 / n2 : 0.0;
    }
    for (std::size_t i = 0; i < l; ++i) {
        auto ki = h.k.row(i);
        const std::size_t last = std::min(l - 1, i + kRecencyHorizon);
        for (std::size_t j = i; j <= last; ++j) {
            const double c = gain * std::exp(-static_cast<double>(j - i)) * inv_norm_sq[j];
            const auto qj = h.q.row(j);
            for (std::size_t c_idx = 0; c_idx < d; ++c_idx) {
                ki[c_idx] += c * qj[c_idx];
            }
        }
    }
    return h;
}

HeadTensors gen_factor_product(std::size_t seq_len, std::size_t head_dim, std::size_t rank, std::uint64_t seed) {
    if (seq_len == 0 || head_dim == 0 || rank == 0 || rank > head_dim) {
        throw Error(ErrorCode::InvalidArgument, "gen_factor_product: need 1 <= rank <= head_dim and seq_len >= 1");
    }
    std::mt19937_64 rng(seed);
    const double norm = 1.0 / std::sqrt(static_cast<double>(rank));
    HeadTensors h;
    h.q = matmul(gaussian(seq_len, rank, rng), gaussian(rank, head_dim, rng)) * norm;
    h.k = matmul(gaussian(seq_len, rank, rng), gaussian(rank, head_dim, rng)) * norm;
    h.v = gaussian(seq_len, head_dim, rng);
    return h;
}

std::vector<double> singular_spectrum(const Matrix& m) {
    if (m.empty()) {
        throw Error(ErrorCode::InvalidArgument, "singular_spectrum of an empty matrix");
    }
    // Work on columns of a tall matrix: a = m or m^T.
    Matrix a = m.rows() >= m.cols() ? transpose(m) : m;  // stored as rows = columns of the tall matrix
    const std::size_t n = a.rows();

    constexpr double eps = std::numeric_limits<double>::epsilon();
    constexpr int kMaxSweeps = 60;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto ap = a.row(p);
                auto aq = a.row(q);
                const double alpha = dot(ap, ap);
                const double beta = dot(aq, aq);
                const double gamma = dot(ap, aq);
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < ap.size(); ++i) {
                    const double x = ap[i];
                    const double y = aq[i];
                    ap[i] = c * x - s * y;
                    aq[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) {
            break;
        }
    }

    std::vector<double> sigma(n);
    for (std::size_t i = 0; i < n; ++i) {
        sigma[i] = std::sqrt(fro_norm_sq(Matrix::row_vector(a.row(i))));
    }
    std::sort(sigma.begin(), sigma.end(), std::greater<>());
    return sigma;
}

std::vector<double> neighbor_attention_profile(const Matrix& q, const Matrix& k, std::size_t window) {
    if (q.rows() != k.rows() || q.cols() != k.cols()) {
        throw Error(ErrorCode::InvalidArgument, "neighbor_attention_profile: Q and K must share shape");
    }
    const std::size_t l = q.rows();
    if (window == 0 || window > l) {
        throw Error(ErrorCode::WindowTooLarge,
                    "window " + std::to_string(window) + " for sequence of length " + std::to_string(l));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    std::vector<double> profile(window, 0.0);
    std::vector<double> logits(l);
    for (std::size_t t = window - 1; t < l; ++t) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i <= t; ++i) {
            logits[i] = dot(q.row(t), k.row(i)) * inv_sqrt_d;
            max_logit = std::max(max_logit, logits[i]);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i <= t; ++i) {
            logits[i] = std::exp(logits[i] - max_logit);
            sum += logits[i];
        }
        const std::size_t first = t + 1 - window;
        for (std::size_t w = 0; w < window; ++w) {
            profile[w] += logits[first + w] / sum;
        }
    }
    const double count = static_cast<double>(l - window + 1);
    for (double& p : profile) {
        p /= count;
    }
    return profile;
}

void write_spectrum_csv(std::ostream& out, std::span<const double> sigma) {
    out << "index,sigma\n" << std::setprecision(17);
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        out << i << ',' << sigma[i] << '\n';
    }
}

void write_profile_csv(std::ostream& out, std::span<const double> profile) {
    out << "offset,weight\n" << std::setprecision(17);
    const auto w = static_cast<long long>(profile.size());
    for (long long i = 0; i < w; ++i) {
        out << (i - w + 1) << ',' << profile[static_cast<std::size_t>(i)] << '\n';
    }
}

}  // namespace lrqk
