//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Published planning and efficiency figures for the AlexNet and VGG16 CONV
// layers. Reports use them to annotate rows whose computed values differ;
// a row matches a config layer only when name and full shape agree.

#include "sfs/tensor.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace sfs::published {

struct Shape {
    std::string_view name;
    std::size_t channels, height, width, kernel, stride, pad, filters;

    bool matches(const LayerSpec& l) const {
        return l.kind == LayerKind::conv && l.name == name && l.channels == channels && l.height == height &&
               l.width == width && l.kernel == kernel && l.stride == stride && l.pad == pad && l.filters == filters;
    }
};

inline constexpr std::uint64_t kDivisionBudget = 100352;
inline constexpr std::uint64_t kGroupingBudget = 200704;

struct DivisionRow {
    Shape shape;
    std::size_t grid; // square grid extent
    std::uint64_t load_times, filter_weights, total_weights_loaded;
};

struct GroupingRow {
    Shape shape;
    std::size_t batch_size, batches;
    std::uint64_t feature_values, total_features_loaded;
};

struct Measurement {
    double macs_millions, runtime_ms, efficiency;
};

struct PerfRow {
    Shape shape;
    Measurement ours, baseline;
    double improvement;
};

inline constexpr Shape vgg(std::string_view name, std::size_t c, std::size_t hw, std::size_t m) {
    return {name, c, hw, hw, 3, 1, 1, m};
}

inline constexpr std::array<Shape, 13> kVgg16 = {
    vgg("CONV1-1", 3, 224, 64),    vgg("CONV1-2", 64, 224, 64),   vgg("CONV2-1", 64, 112, 128),
    vgg("CONV2-2", 128, 112, 128), vgg("CONV3-1", 128, 56, 256),  vgg("CONV3-2", 256, 56, 256),
    vgg("CONV3-3", 256, 56, 256),  vgg("CONV4-1", 256, 28, 512),  vgg("CONV4-2", 512, 28, 512),
    vgg("CONV4-3", 512, 28, 512),  vgg("CONV5-1", 512, 14, 512),  vgg("CONV5-2", 512, 14, 512),
    vgg("CONV5-3", 512, 14, 512)};

inline constexpr std::array<Shape, 5> kAlexNet = {{
    {"CONV1", 3, 227, 227, 11, 4, 0, 96},
    {"CONV2", 96, 27, 27, 5, 1, 2, 256},
    {"CONV3", 256, 13, 13, 3, 1, 1, 384},
    {"CONV4", 384, 13, 13, 3, 1, 1, 384},
    {"CONV5", 384, 13, 13, 3, 1, 1, 256},
}};

// VGG16, output buffer of 100352 elements, 14×14 output tiles.
inline constexpr std::array<DivisionRow, 13> kVgg16Division = {{
    {kVgg16[0], 16, 256, 1728, 442368},
    {kVgg16[1], 16, 256, 36864, 9437184},
    {kVgg16[2], 8, 64, 73728, 4718592},
    {kVgg16[3], 8, 64, 147456, 9437184},
    {kVgg16[4], 4, 16, 294912, 4718592},
    {kVgg16[5], 4, 16, 589824, 9437184},
    {kVgg16[6], 4, 16, 589824, 9437184},
    {kVgg16[7], 2, 4, 1179648, 4718592},
    {kVgg16[8], 2, 4, 2359296, 9437184},
    {kVgg16[9], 2, 4, 2359296, 9437184},
    {kVgg16[10], 1, 1, 2359296, 2359296},
    {kVgg16[11], 1, 1, 2359296, 2359296},
    {kVgg16[12], 1, 1, 2359296, 2359296},
}};

// VGG16, output buffer of 200704 elements. The CONV4-1 row as published
// (1 batch, 200704) does not follow from M = 512 and m = 256.
inline constexpr std::array<GroupingRow, 13> kVgg16Grouping = {{
    {kVgg16[0], 4, 16, 150528, 2408448},
    {kVgg16[1], 4, 16, 3211264, 51380224},
    {kVgg16[2], 16, 8, 802816, 6422528},
    {kVgg16[3], 16, 8, 1605632, 12845056},
    {kVgg16[4], 64, 4, 401408, 1605632},
    {kVgg16[5], 64, 4, 802816, 3211264},
    {kVgg16[6], 64, 4, 802816, 3211264},
    {kVgg16[7], 256, 1, 200704, 200704},
    {kVgg16[8], 256, 2, 401408, 802816},
    {kVgg16[9], 256, 2, 401408, 802816},
    {kVgg16[10], 512, 1, 100352, 100352},
    {kVgg16[11], 512, 1, 100352, 100352},
    {kVgg16[12], 512, 1, 100352, 100352},
}};

// 8-PE streaming processor against the 168-PE baseline accelerator.
inline constexpr std::array<PerfRow, 5> kAlexNetPerf = {{
    {kAlexNet[0], {105.4152, 441.9150, 0.0596}, {421.6608, 20.9000, 0.1201}, 0.5},
    {kAlexNet[1], {447.8976, 498.9550, 0.2244}, {716.4638, 41.9000, 0.1018}, 2.2},
    {kAlexNet[2], {149.5204, 156.2320, 0.2393}, {241.1512, 23.6000, 0.0608}, 3.9},
    {kAlexNet[3], {224.2806, 182.2490, 0.3077}, {118.1646, 18.4000, 0.0382}, 8.0},
    {kAlexNet[4], {149.5204, 155.6620, 0.3077}, {81.6753, 10.5000, 0.0463}, 5.2},
}};

inline constexpr std::array<PerfRow, 13> kVgg16Perf = {{
    {kVgg16[0], {86.7, 605.9, 0.0358}, {258.5, 76.2, 0.0202}, 1.8},
    {kVgg16[1], {1849.7, 6531.1, 0.0708}, {2910.2, 910.3, 0.0190}, 3.7},
    {kVgg16[2], {924.8, 3678.0, 0.0629}, {2133.0, 470.3, 0.0270}, 2.3},
    {kVgg16[3], {1849.7, 6014.1, 0.0769}, {3371.8, 894.3, 0.0224}, 3.4},
    {kVgg16[4], {924.8, 2655.4, 0.0871}, {1660.6, 241.1, 0.0410}, 2.1},
    {kVgg16[5], {1849.7, 4141.1, 0.1117}, {2538.8, 460.9, 0.0328}, 3.4},
    {kVgg16[6], {1849.7, 4091.1, 0.1130}, {2323.9, 457.7, 0.0302}, 3.7},
    {kVgg16[7], {924.8, 1977.2, 0.1169}, {1109.0, 135.8, 0.0486}, 2.4},
    {kVgg16[8], {1849.7, 2689.9, 0.1719}, {1503.0, 254.8, 0.0351}, 4.9},
    {kVgg16[9], {1849.7, 2586.6, 0.1788}, {973.4, 246.3, 0.0235}, 7.6},
    {kVgg16[10], {462.4, 596.5, 0.1938}, {333.3, 54.3, 0.0365}, 5.3},
    {kVgg16[11], {462.4, 548.9, 0.2106}, {218.4, 53.7, 0.0242}, 8.7},
    {kVgg16[12], {462.4, 479.8, 0.2410}, {198.5, 53.7, 0.0220}, 11.0},
}};

template <class Row, std::size_t N>
const Row* find(const std::array<Row, N>& rows, const LayerSpec& layer) {
    for (const auto& row : rows)
        if (row.shape.matches(layer))
            return &row;
    return nullptr;
}

inline const PerfRow* find_perf(const LayerSpec& layer) {
    if (const auto* row = find(kAlexNetPerf, layer))
        return row;
    return find(kVgg16Perf, layer);
}

} // namespace sfs::published
