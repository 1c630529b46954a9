//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Functional model of the stacked-filters-stationary dataflow.
//
// CONV: channels are processed one at a time. A channel's input plane is
// buffered (zero-padded), then every output coordinate (y, x) issues one
// 3D-SIMD instruction: for each of the K×K window positions p the engine
// loads one feature value and ptr[p], streams ptr[p] (relative index,
// weight) pairs, rebuilds the absolute filter index and accumulates into
// that filter's output register. When the window is done the m registers are
// added into the global buffer at (y, x) and cleared.
//
// FC: one pass over all C×H×W positions with the M output registers held
// for the whole pass.

#include "sfs/csf.hpp"
#include "sfs/error.hpp"
#include "sfs/tensor.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace sfs {

struct TraceCounters {
    std::uint64_t feature_loads = 0;
    std::uint64_t pointer_loads = 0;
    std::uint64_t weight_loads = 0;
    std::uint64_t index_loads = 0;
    std::uint64_t macs_executed = 0;
    std::uint64_t simd_instructions = 0;

    TraceCounters& operator+=(const TraceCounters& o) {
        feature_loads += o.feature_loads;
        pointer_loads += o.pointer_loads;
        weight_loads += o.weight_loads;
        index_loads += o.index_loads;
        macs_executed += o.macs_executed;
        simd_instructions += o.simd_instructions;
        return *this;
    }

    friend bool operator==(const TraceCounters&, const TraceCounters&) = default;
};

struct EngineResult {
    DenseTensor output;
    TraceCounters trace;
};

// State of one CONV processor working through a single filter batch: the
// buffered channel plane, m output registers and the m × H' × W' global
// buffer. Holds a non-owning reference to the stream, which must outlive it.
class EngineContext {
public:
    EngineContext(LayerSpec layer, const CsfStream& stream)
        : layer_(std::move(layer)), stream_(&stream), out_(output_shape(layer_)) {
        if (layer_.kind != LayerKind::conv || stream.profile != CsfProfile::conv)
            throw ShapeError("engine: conv context requires a conv layer and a conv stream");
        if (stream.channels != layer_.channels || stream.kernel != layer_.kernel)
            throw ShapeError("engine: stream C=" + std::to_string(stream.channels) + " K=" + std::to_string(stream.kernel) +
                             " does not match layer '" + layer_.name + "'");
        validate(stream);
        registers_.assign(stream.m, 0.0f);
        global_ = DenseTensor({stream.m, out_.height, out_.width});
        plane_h_ = layer_.height + 2 * layer_.pad;
        plane_w_ = layer_.width + 2 * layer_.pad;
    }

    // Buffers channel `chi` of `vi` (C × H × W) with its zero border.
    void buffer_channel(const DenseTensor& vi, std::size_t chi) {
        detail::expect_dims(vi, {layer_.channels, layer_.height, layer_.width}, "engine input");
        if (chi >= layer_.channels)
            throw ShapeError("engine: channel " + std::to_string(chi) + " out of range");
        plane_ = padded_channel(vi, chi, layer_.pad);
        plane_channel_ = chi;
    }

    // One 3D-SIMD instruction over the K×K window at output (y, x) of the
    // buffered channel. Returns the registers as they were before the flush.
    std::span<const float> simd3d_step(std::size_t chi, std::size_t y, std::size_t x) {
        const std::size_t k = layer_.kernel;
        const std::size_t s = layer_.stride;
        if (chi != plane_channel_)
            throw ShapeError("engine: channel " + std::to_string(chi) + " is not buffered");
        if (y >= out_.height || x >= out_.width || s * y + k > plane_h_ || s * x + k > plane_w_)
            throw ShapeError("engine: window at (" + std::to_string(y) + ", " + std::to_string(x) +
                             ") leaves the padded input plane");

        std::fill(registers_.begin(), registers_.end(), 0.0f);
        const std::size_t m = stream_->m;
        const std::size_t base = chi * k * k;
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < k; ++c) {
                const float feature = plane_[(s * y + r) * plane_w_ + s * x + c];
                const auto& pos = stream_->positions[base + r * k + c];
                ++trace_.feature_loads;
                ++trace_.pointer_loads;
                std::size_t index = 0;
                for (std::uint32_t e = 0; e < pos.ptr; ++e) {
                    const CsfEntry& entry = pos.entries[e];
                    ++trace_.weight_loads;
                    ++trace_.index_loads;
                    index += entry.rel_index;
                    if (index >= m)
                        throw MalformedStream("engine: filter index " + std::to_string(index) + " >= m");
                    registers_[index] += entry.weight * feature;
                    ++trace_.macs_executed;
                }
            }
        }
        ++trace_.simd_instructions;
        for (std::size_t j = 0; j < m; ++j)
            global_(j, y, x) += registers_[j];
        return registers_;
    }

    const LayerSpec& layer() const noexcept { return layer_; }
    OutputShape output_extent() const noexcept { return out_; }
    std::span<const float> registers() const noexcept { return registers_; }
    const DenseTensor& global_buffer() const noexcept { return global_; }
    const TraceCounters& trace() const noexcept { return trace_; }

    EngineResult finish() && { return {std::move(global_), trace_}; }

private:
    static constexpr std::size_t no_channel = std::numeric_limits<std::size_t>::max();

    LayerSpec layer_;
    const CsfStream* stream_;
    OutputShape out_;
    std::vector<float> registers_;
    DenseTensor global_;
    TraceCounters trace_;
    std::vector<float> plane_;
    std::size_t plane_channel_ = no_channel;
    std::size_t plane_h_ = 0;
    std::size_t plane_w_ = 0;
};

// Runs one CONV filter batch: chi outermost, then (y, x), then the window.
// Output is stream.m × H' × W'.
inline EngineResult run_conv(const CsfStream& stream, const DenseTensor& vi, const LayerSpec& layer) {
    EngineContext ctx(layer, stream);
    const auto out = ctx.output_extent();
    for (std::size_t chi = 0; chi < layer.channels; ++chi) {
        ctx.buffer_channel(vi, chi);
        for (std::size_t y = 0; y < out.height; ++y)
            for (std::size_t x = 0; x < out.width; ++x)
                ctx.simd3d_step(chi, y, x);
    }
    return std::move(ctx).finish();
}

// Streams every input value once against an fc-profile stream. Output is
// stream.m × 1 × 1; counts one SIMD instruction for the final drain.
inline EngineResult run_fc(const CsfStream& stream, const DenseTensor& vi) {
    if (stream.profile != CsfProfile::fc)
        throw ShapeError("engine: run_fc needs an fc-profile stream");
    validate(stream);
    if (stream.position_count() != vi.size())
        throw ShapeError("engine: stream has " + std::to_string(stream.position_count()) + " positions, input has " +
                         std::to_string(vi.size()) + " values");
    EngineResult result{DenseTensor({stream.m, 1, 1}), {}};
    auto registers = result.output.data();
    auto& trace = result.trace;
    const auto features = vi.data();
    for (std::size_t p = 0; p < stream.positions.size(); ++p) {
        const float feature = features[p];
        const auto& pos = stream.positions[p];
        ++trace.feature_loads;
        ++trace.pointer_loads;
        std::size_t index = 0;
        for (std::uint32_t e = 0; e < pos.ptr; ++e) {
            const CsfEntry& entry = pos.entries[e];
            ++trace.weight_loads;
            ++trace.index_loads;
            index += entry.rel_index;
            if (index >= stream.m)
                throw MalformedStream("engine: filter index " + std::to_string(index) + " >= m");
            registers[index] += entry.weight * feature;
            ++trace.macs_executed;
        }
    }
    trace.simd_instructions = 1;
    return result;
}

// Called on each encoded batch before it runs; the second argument is the
// batch number. Lets callers inspect or tamper with streams.
using StreamHook = std::function<void(CsfStream&, std::size_t)>;

// Splits the M filters of `wf` into batches of `m` (the last may be
// smaller), encodes and runs each, and concatenates the outputs along the
// filter axis. Traces are summed.
inline EngineResult run_layer_batched(const DenseTensor& wf, const DenseTensor& vi, const LayerSpec& layer,
                                      std::size_t m, const StreamHook& hook = {}) {
    layer.validate();
    if (m == 0 || m > layer.filters)
        throw ShapeError("run_layer_batched: batch size must lie in [1, M]");
    const auto out = output_shape(layer);
    const bool conv = layer.kind == LayerKind::conv;
    if (conv)
        detail::expect_dims(wf, {layer.filters, layer.channels, layer.kernel, layer.kernel}, "filter bank");
    else
        detail::expect_dims(wf, {layer.filters, layer.channels, layer.height, layer.width}, "filter bank");
    detail::expect_dims(vi, {layer.channels, layer.height, layer.width}, "input");

    EngineResult result{DenseTensor({layer.filters, out.height, out.width}), {}};
    const std::size_t plane = out.height * out.width;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < layer.filters; start += m, ++batch) {
        const std::size_t size = std::min(m, layer.filters - start);
        CsfStream stream = encode_csf(stack_filters(wf, start, size), conv ? CsfProfile::conv : CsfProfile::fc);
        if (hook)
            hook(stream, batch);
        EngineResult part = conv ? run_conv(stream, vi, layer) : run_fc(stream, vi);
        std::copy(part.output.data().begin(), part.output.data().end(), result.output.data().begin() + start * plane);
        result.trace += part.trace;
    }
    return result;
}

} // namespace sfs
