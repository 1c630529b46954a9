//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "sfs/engine.hpp"
#include "sfs/error.hpp"
#include "sfs/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace sfs {

struct PerfParams {
    std::uint32_t pe_count = 8;
    double clock_mhz = 299.97;
    std::uint32_t add_latency_cycles = 11; // float32 adder latency
    std::uint32_t weights_per_clock = 8;
    std::uint32_t efficiency_divisor = 4;

    void validate() const {
        if (pe_count == 0 || add_latency_cycles == 0 || weights_per_clock == 0 || efficiency_divisor == 0)
            throw std::invalid_argument("perf params: counts must be >= 1");
        if (!(clock_mhz > 0.0))
            throw std::invalid_argument("perf params: clock_mhz must be positive");
    }
};

// Divisor that reproduces the published per-PE efficiency of the 168-PE baseline.
inline constexpr std::uint32_t kBaselineEfficiencyDivisor = 168;

inline double efficiency_per_pe(double macs_millions, double runtime_ms, std::uint32_t divisor) {
    if (!(runtime_ms > 0.0))
        throw std::invalid_argument("efficiency_per_pe: runtime must be positive");
    if (divisor == 0)
        throw std::invalid_argument("efficiency_per_pe: divisor must be >= 1");
    return macs_millions / (runtime_ms * divisor);
}

inline double improvement(double ours, double baseline) {
    if (!(baseline > 0.0))
        throw std::invalid_argument("improvement: baseline must be positive");
    return ours / baseline;
}

inline double round_to(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(value * scale) / scale;
}

// max(load-bound, compute-bound) cycles plus one adder drain per SIMD instruction.
inline std::uint64_t predicted_cycles(const TraceCounters& trace, const PerfParams& params) {
    params.validate();
    const auto up = [](std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; };
    const std::uint64_t load = up(trace.weight_loads, params.weights_per_clock);
    const std::uint64_t compute = up(trace.macs_executed, params.pe_count);
    return std::max(load, compute) + std::uint64_t{params.add_latency_cycles} * trace.simd_instructions;
}

// Milliseconds at params.clock_mhz.
inline double predict_runtime(const TraceCounters& trace, const PerfParams& params) {
    return static_cast<double>(predicted_cycles(trace, params)) / (params.clock_mhz * 1000.0);
}

// Counters run_layer_batched would report for a fully dense bank, computed
// without running it.
inline TraceCounters dense_trace(const LayerSpec& layer, std::size_t m) {
    layer.validate();
    if (m == 0 || m > layer.filters)
        throw std::invalid_argument("dense_trace: batch size must lie in [1, M]");
    const std::uint64_t batches = (layer.filters + m - 1) / m;
    TraceCounters t;
    t.macs_executed = mac_count(layer);
    t.weight_loads = t.index_loads = t.macs_executed;
    if (layer.kind == LayerKind::fc) {
        t.simd_instructions = batches;
        t.feature_loads = batches * layer.channels * layer.height * layer.width;
    } else {
        const auto out = output_shape(layer);
        t.simd_instructions = batches * layer.channels * out.height * out.width;
        t.feature_loads = t.simd_instructions * layer.kernel * layer.kernel;
    }
    t.pointer_loads = t.feature_loads;
    return t;
}

enum class RowRole { ours, baseline };

// One input row: the workload is either MACs in millions or an engine
// trace; runtime may be omitted for traces, in which case it is predicted.
struct PerfRowInput {
    std::string layer;
    RowRole role = RowRole::ours;
    std::variant<double, TraceCounters> work;
    std::optional<double> runtime_ms;
};

struct LayerPerfRow {
    std::string layer;
    RowRole role = RowRole::ours;
    double macs_millions = 0.0;
    double runtime_ms = 0.0;
    double efficiency = 0.0;
    std::optional<double> improvement; // ours rows with a paired baseline only
};

// Rows keep input order. "ours" rows use params.efficiency_divisor, baseline
// rows `baseline_divisor`; an ours row is paired with the baseline row of the
// same layer name. A baseline without an ours row is an error.
inline std::vector<LayerPerfRow> build_table(std::span<const PerfRowInput> rows, const PerfParams& params,
                                             std::uint32_t baseline_divisor = kBaselineEfficiencyDivisor) {
    params.validate();
    std::vector<LayerPerfRow> out;
    out.reserve(rows.size());
    std::map<std::string, std::size_t> ours_at;
    std::map<std::string, std::size_t> baseline_at;
    for (const auto& in : rows) {
        LayerPerfRow row;
        row.layer = in.layer;
        row.role = in.role;
        if (const auto* macs = std::get_if<double>(&in.work)) {
            if (!in.runtime_ms)
                throw Error("perf table: row '" + in.layer + "' gives MACs without a runtime");
            row.macs_millions = *macs;
            row.runtime_ms = *in.runtime_ms;
        } else {
            const auto& trace = std::get<TraceCounters>(in.work);
            row.macs_millions = static_cast<double>(trace.macs_executed) / 1e6;
            row.runtime_ms = in.runtime_ms ? *in.runtime_ms : predict_runtime(trace, params);
        }
        const std::uint32_t divisor = in.role == RowRole::ours ? params.efficiency_divisor : baseline_divisor;
        row.efficiency = efficiency_per_pe(row.macs_millions, row.runtime_ms, divisor);
        auto& index = in.role == RowRole::ours ? ours_at : baseline_at;
        if (!index.emplace(in.layer, out.size()).second)
            throw Error("perf table: duplicate row for layer '" + in.layer + "'");
        out.push_back(std::move(row));
    }
    for (const auto& [layer, at] : baseline_at) {
        const auto it = ours_at.find(layer);
        if (it == ours_at.end())
            throw Error("perf table: missing baseline pairing, baseline row '" + layer + "' has no matching row");
        out[it->second].improvement = improvement(out[it->second].efficiency, out[at].efficiency);
    }
    return out;
}

} // namespace sfs
