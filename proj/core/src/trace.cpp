#include "lrqk/trace.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "lrqk/error.hpp"

namespace lrqk {

namespace {

constexpr std::array<char, 4> kMagic{'L', 'R', 'Q', 'K'};

class ByteWriter {
public:
    void u8(std::uint8_t v) {
        m_bytes.push_back(static_cast<char>(v));
    }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f32(float v) {
        u32(std::bit_cast<std::uint32_t>(v));
    }
    void raw(const char* p, std::size_t n) {
        m_bytes.insert(m_bytes.end(), p, p + n);
    }
    const std::vector<char>& bytes() const noexcept {
        return m_bytes;
    }

private:
    std::vector<char> m_bytes;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : m_bytes(std::move(bytes)) {}

    void need(std::size_t n, const char* what) const {
        if (m_bytes.size() - m_pos < n) {
            throw Error(ErrorCode::CorruptTrace, std::string("truncated trace while reading ") + what);
        }
    }
    std::uint8_t u8() {
        need(1, "u8");
        return static_cast<std::uint8_t>(m_bytes[m_pos++]);
    }
    std::uint16_t u16() {
        need(2, "u16");
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) {
            v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(m_bytes[m_pos++]) << (8 * i));
        }
        return v;
    }
    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(m_bytes[m_pos++])) << (8 * i);
        }
        return v;
    }
    float f32() {
        return std::bit_cast<float>(u32());
    }
    bool at_end() const noexcept {
        return m_pos == m_bytes.size();
    }
    std::size_t remaining() const noexcept {
        return m_bytes.size() - m_pos;
    }

private:
    std::vector<char> m_bytes;
    std::size_t m_pos = 0;
};

}  // namespace

TraceFile TraceFile::from_heads(const std::vector<HeadTensors>& heads) {
    TraceFile t;
    t.head_count = static_cast<std::uint32_t>(heads.size());
    t.seq_len = heads.empty() ? 0 : static_cast<std::uint32_t>(heads.front().seq_len());
    for (const auto& h : heads) {
        t.tensors.push_back({TensorRole::Q, h.q});
        t.tensors.push_back({TensorRole::K, h.k});
        t.tensors.push_back({TensorRole::V, h.v});
    }
    return t;
}

std::vector<HeadTensors> TraceFile::heads() const {
    if (tensors.size() != static_cast<std::size_t>(head_count) * 3) {
        throw Error(ErrorCode::CorruptTrace, "trace has " + std::to_string(tensors.size()) + " records for " +
                                                 std::to_string(head_count) + " heads");
    }
    std::vector<HeadTensors> out;
    for (std::size_t h = 0; h < head_count; ++h) {
        const auto& q = tensors[3 * h];
        const auto& k = tensors[3 * h + 1];
        const auto& v = tensors[3 * h + 2];
        if (q.role != TensorRole::Q || k.role != TensorRole::K || v.role != TensorRole::V) {
            throw Error(ErrorCode::CorruptTrace, "head " + std::to_string(h) + " is not a Q, K, V triple");
        }
        if (q.data.rows() != k.data.rows() || q.data.rows() != v.data.rows() || q.data.cols() != k.data.cols() ||
            q.data.cols() != v.data.cols()) {
            throw Error(ErrorCode::CorruptTrace, "head " + std::to_string(h) + " has mismatched tensor shapes");
        }
        out.push_back(HeadTensors{q.data, k.data, v.data});
    }
    return out;
}

void save_trace(const std::filesystem::path& path, const TraceFile& trace) {
    ByteWriter w;
    w.raw(kMagic.data(), kMagic.size());
    w.u16(kTraceVersion);
    w.u32(trace.head_count);
    w.u32(trace.seq_len);
    w.u32(static_cast<std::uint32_t>(trace.tensors.size()));
    for (const auto& t : trace.tensors) {
        w.u8(static_cast<std::uint8_t>(t.role));
        w.u32(static_cast<std::uint32_t>(t.data.rows()));
        w.u32(static_cast<std::uint32_t>(t.data.cols()));
        for (double x : t.data.data()) {
            w.f32(static_cast<float>(x));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

TraceFile load_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    ByteReader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

    r.need(kMagic.size(), "magic");
    for (char c : kMagic) {
        if (static_cast<char>(r.u8()) != c) {
            throw Error(ErrorCode::CorruptTrace, "bad magic in " + path.string());
        }
    }
    const std::uint16_t version = r.u16();
    if (version != kTraceVersion) {
        throw Error(ErrorCode::UnsupportedVersion, "trace version " + std::to_string(version));
    }

    TraceFile t;
    t.head_count = r.u32();
    t.seq_len = r.u32();
    const std::uint32_t records = r.u32();
    for (std::uint32_t i = 0; i < records; ++i) {
        const std::uint8_t role = r.u8();
        if (role > 2) {
            throw Error(ErrorCode::CorruptTrace, "record " + std::to_string(i) + " has unknown role");
        }
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        const std::size_t count = static_cast<std::size_t>(rows) * cols;
        if (count > r.remaining() / 4) {
            throw Error(ErrorCode::CorruptTrace, "record " + std::to_string(i) + " payload is truncated");
        }
        std::vector<double> data(count);
        for (double& x : data) {
            x = static_cast<double>(r.f32());
        }
        try {
            t.tensors.push_back({static_cast<TensorRole>(role), Matrix(rows, cols, std::move(data))});
        } catch (const Error&) {
            throw Error(ErrorCode::CorruptTrace, "record " + std::to_string(i) + " has non-finite values");
        }
    }
    if (!r.at_end()) {
        throw Error(ErrorCode::CorruptTrace, "trailing bytes after last record");
    }
    return t;
}

}  // namespace lrqk
