//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Output-buffer-constrained planning for CONV layers.
//
// Feature division tiles the output plane; each output tile of
// h_do × w_do needs an input window of ((h_do - 1)·S + K) × ((w_do - 1)·S + K),
// so neighbouring input tiles overlap by K - S rows/columns. Every tile
// re-streams the whole filter bank.
//
// Filter grouping instead splits the M filters into batches of m whose full
// output planes fit the buffer; every batch re-streams the whole input.

#include "sfs/error.hpp"
#include "sfs/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sfs {

struct InputExtent {
    std::size_t width;
    std::size_t height;
};

inline InputExtent division_input_dims(std::size_t w_do, std::size_t h_do, std::size_t stride, std::size_t kernel) {
    if (w_do == 0 || h_do == 0)
        throw std::invalid_argument("division_input_dims: output tile extents must be >= 1");
    return {(w_do - 1) * stride + kernel, (h_do - 1) * stride + kernel};
}

struct TileMode {
    enum class Kind { fixed_tile, budget_max };
    Kind kind = Kind::fixed_tile;
    std::size_t tile = 14;

    static TileMode fixed(std::size_t t) { return {Kind::fixed_tile, t}; }
    static TileMode budget_max() { return {Kind::budget_max, 0}; }
};

struct DivisionPlan {
    std::size_t out_h = 0; // H'
    std::size_t out_w = 0; // W'
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t tile_out_h = 0;
    std::size_t tile_out_w = 0;
    std::size_t tile_in_h = 0;
    std::size_t tile_in_w = 0;
    std::size_t stride = 1;
    std::size_t kernel = 1;
    std::uint64_t load_times = 0;
    std::uint64_t dense_weight_count = 0;
    std::uint64_t total_weights_loaded = 0;

    // Output rows/cols of a tile; edge tiles may be smaller.
    std::size_t tile_rows(std::size_t ty) const { return std::min(tile_out_h, out_h - ty * tile_out_h); }
    std::size_t tile_cols(std::size_t tx) const { return std::min(tile_out_w, out_w - tx * tile_out_w); }

    std::size_t buffer_elements(std::size_t filters) const { return tile_out_h * tile_out_w * filters; }
};

struct GroupingPlan {
    std::size_t m = 0;
    std::size_t batches = 0;
    std::uint64_t feature_count = 0;
    std::uint64_t total_features_loaded = 0;
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

inline DivisionPlan plan_feature_division(const LayerSpec& layer, std::uint64_t budget,
                                          TileMode mode = TileMode::fixed(14)) {
    if (layer.kind != LayerKind::conv)
        throw PlanningError("feature division applies to conv layers ('" + layer.name + "' is fc)");
    const auto out = output_shape(layer);
    const std::uint64_t filters = layer.filters;
    if (budget < filters)
        throw PlanningError("division budget " + std::to_string(budget) + " smaller than M=" + std::to_string(filters));

    std::size_t tile_h = 0;
    std::size_t tile_w = 0;
    if (mode.kind == TileMode::Kind::fixed_tile) {
        if (mode.tile == 0)
            throw PlanningError("tile size must be >= 1");
        tile_h = std::min(mode.tile, out.height);
        tile_w = std::min(mode.tile, out.width);
        if (std::uint64_t{tile_h} * tile_w * filters > budget)
            throw PlanningError("layer '" + layer.name + "': " + std::to_string(tile_h) + "x" + std::to_string(tile_w) +
                                " tile of " + std::to_string(filters) + " filters exceeds budget " +
                                std::to_string(budget));
    } else if (std::uint64_t{out.height} * out.width * filters <= budget) {
        tile_h = out.height;
        tile_w = out.width;
    } else {
        std::size_t t = 1;
        while (std::uint64_t{t + 1} * (t + 1) * filters <= budget)
            ++t;
        tile_h = std::min(t, out.height);
        tile_w = std::min(t, out.width);
    }

    DivisionPlan plan;
    plan.out_h = out.height;
    plan.out_w = out.width;
    plan.tile_out_h = tile_h;
    plan.tile_out_w = tile_w;
    plan.grid_h = ceil_div(out.height, tile_h);
    plan.grid_w = ceil_div(out.width, tile_w);
    const auto in = division_input_dims(tile_w, tile_h, layer.stride, layer.kernel);
    plan.tile_in_h = in.height;
    plan.tile_in_w = in.width;
    plan.stride = layer.stride;
    plan.kernel = layer.kernel;
    plan.load_times = std::uint64_t{plan.grid_h} * plan.grid_w;
    plan.dense_weight_count = filters * layer.channels * layer.kernel * layer.kernel;
    plan.total_weights_loaded = plan.load_times * plan.dense_weight_count;
    return plan;
}

// Weights streamed when the bank is CSF-encoded: each tile reloads only the
// nonzeros.
inline std::uint64_t compressed_weights_loaded(const DivisionPlan& plan, std::uint64_t nonzeros) {
    return plan.load_times * nonzeros;
}

inline GroupingPlan plan_filter_grouping(const LayerSpec& layer, std::uint64_t budget) {
    const auto out = output_shape(layer);
    const std::uint64_t plane = std::uint64_t{out.height} * out.width;
    if (budget < plane)
        throw PlanningError("layer '" + layer.name + "': grouping budget " + std::to_string(budget) +
                            " cannot hold one output plane of " + std::to_string(plane));
    GroupingPlan plan;
    plan.m = static_cast<std::size_t>(std::min<std::uint64_t>(layer.filters, budget / plane));
    plan.batches = ceil_div(layer.filters, plan.m);
    plan.feature_count = std::uint64_t{layer.channels} * layer.height * layer.width;
    plan.total_features_loaded = plan.batches * plan.feature_count;
    return plan;
}

namespace detail {

inline void check_tile(const DivisionPlan& plan, std::size_t ty, std::size_t tx) {
    if (ty >= plan.grid_h || tx >= plan.grid_w)
        throw ShapeError("tile (" + std::to_string(ty) + ", " + std::to_string(tx) + ") outside " +
                         std::to_string(plan.grid_h) + "x" + std::to_string(plan.grid_w) + " grid");
}

} // namespace detail

// Layer describing one tile as a standalone unpadded CONV over its
// extracted input window.
inline LayerSpec tile_layer(const LayerSpec& layer, const DivisionPlan& plan, std::size_t ty, std::size_t tx) {
    detail::check_tile(plan, ty, tx);
    const auto in = division_input_dims(plan.tile_cols(tx), plan.tile_rows(ty), layer.stride, layer.kernel);
    return LayerSpec::conv(layer.name + "@" + std::to_string(ty) + "," + std::to_string(tx), layer.channels, in.height,
                           in.width, layer.kernel, layer.stride, 0, layer.filters);
}

// C × h_di × w_di window of the zero-padded input feeding tile (ty, tx).
// Its origin in the padded plane is (ty·tile_out_h·S, tx·tile_out_w·S).
inline DenseTensor extract_division(const DenseTensor& vi, const DivisionPlan& plan, std::size_t ty, std::size_t tx,
                                    const LayerSpec& layer) {
    detail::check_tile(plan, ty, tx);
    detail::expect_dims(vi, {layer.channels, layer.height, layer.width}, "extract_division input");
    const auto in = division_input_dims(plan.tile_cols(tx), plan.tile_rows(ty), layer.stride, layer.kernel);
    const std::size_t y0 = ty * plan.tile_out_h * layer.stride;
    const std::size_t x0 = tx * plan.tile_out_w * layer.stride;
    const std::size_t pad = layer.pad;
    DenseTensor tile({layer.channels, in.height, in.width});
    for (std::size_t chi = 0; chi < layer.channels; ++chi) {
        for (std::size_t r = 0; r < in.height; ++r) {
            const std::size_t py = y0 + r;
            if (py < pad || py >= pad + layer.height)
                continue;
            for (std::size_t c = 0; c < in.width; ++c) {
                const std::size_t px = x0 + c;
                if (px < pad || px >= pad + layer.width)
                    continue;
                tile(chi, r, c) = vi(chi, py - pad, px - pad);
            }
        }
    }
    return tile;
}

// Places per-tile outputs (row-major over the grid) into one m × H' × W' tensor.
inline DenseTensor stitch_outputs(std::span<const DenseTensor> tiles, const DivisionPlan& plan) {
    if (tiles.size() != plan.grid_h * plan.grid_w)
        throw ShapeError("stitch_outputs: expected " + std::to_string(plan.grid_h * plan.grid_w) + " tiles, got " +
                         std::to_string(tiles.size()));
    if (tiles.front().rank() != 3)
        throw ShapeError("stitch_outputs: tiles must be rank 3");
    const std::size_t m = tiles.front().dim(0);
    DenseTensor out({m, plan.out_h, plan.out_w});
    for (std::size_t ty = 0; ty < plan.grid_h; ++ty) {
        for (std::size_t tx = 0; tx < plan.grid_w; ++tx) {
            const DenseTensor& tile = tiles[ty * plan.grid_w + tx];
            const std::size_t rows = plan.tile_rows(ty);
            const std::size_t cols = plan.tile_cols(tx);
            detail::expect_dims(tile, {m, rows, cols}, "stitch_outputs tile");
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        out(j, ty * plan.tile_out_h + r, tx * plan.tile_out_w + c) = tile(j, r, c);
        }
    }
    return out;
}

struct StrategyComparison {
    DivisionPlan division;
    GroupingPlan grouping;
    std::uint64_t weights_loaded = 0;  // division: dense weights streamed over all tiles
    std::uint64_t features_loaded = 0; // grouping: input features streamed over all batches
    std::uint64_t division_buffer = 0; // output elements held per tile
    std::uint64_t grouping_buffer = 0; // output elements held per batch
};

inline StrategyComparison compare_strategies(const LayerSpec& layer, std::uint64_t div_budget, std::uint64_t grp_budget,
                                             TileMode mode = TileMode::fixed(14)) {
    StrategyComparison cmp;
    cmp.division = plan_feature_division(layer, div_budget, mode);
    cmp.grouping = plan_filter_grouping(layer, grp_budget);
    cmp.weights_loaded = cmp.division.total_weights_loaded;
    cmp.features_loaded = cmp.grouping.total_features_loaded;
    cmp.division_buffer = cmp.division.buffer_elements(layer.filters);
    const auto out = output_shape(layer);
    cmp.grouping_buffer = std::uint64_t{cmp.grouping.m} * out.height * out.width;
    return cmp;
}

} // namespace sfs
