#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lrqk/matrix.hpp"
#include "lrqk/workload.hpp"

namespace lrqk {

/*
 * Trace file layout, all integers little-endian:
 *
 *   "LRQK"            4 bytes magic
 *   version           u16 (= 1)
 *   head_count        u32
 *   seq_len           u32
 *   record_count      u32
 *   record_count x { role u8 (0 = Q, 1 = K, 2 = V), rows u32, cols u32,
 *                    rows*cols IEEE-754 binary32, row-major }
 *
 * Heads are stored as consecutive Q, K, V records.
 */
inline constexpr std::uint16_t kTraceVersion = 1;

enum class TensorRole : std::uint8_t { Q = 0, K = 1, V = 2 };

struct TraceTensor {
    TensorRole role;
    Matrix data;
};

struct TraceFile {
    std::uint32_t head_count = 0;
    std::uint32_t seq_len = 0;
    std::vector<TraceTensor> tensors;

    static TraceFile from_heads(const std::vector<HeadTensors>& heads);

    /// Groups records into heads. Throws CorruptTrace unless they form Q, K, V triples.
    std::vector<HeadTensors> heads() const;
};

/// Writes the file; values are rounded to single precision. Throws Io on failure.
void save_trace(const std::filesystem::path& path, const TraceFile& trace);

/// Throws CorruptTrace (bad magic, truncation, bad role, non-finite payload)
/// or UnsupportedVersion.
TraceFile load_trace(const std::filesystem::path& path);

}  // namespace lrqk
