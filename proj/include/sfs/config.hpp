//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Network description files.
//
//   # comment
//   [layer]
//   name = CONV1
//   type = conv            # conv | fc
//   in_channels = 3
//   in_height = 227
//   in_width = 227
//   kernel = 11            # conv only (fc: omitted or 1)
//   stride = 4             # conv only (fc: omitted or 1)
//   pad = 0                # optional, default 0 (fc: omitted or 0)
//   filters = 96
//
// Sections appear in network order. Unknown keys, repeated keys, repeated
// layer names and non-integer values are errors reported with line numbers.

#include "sfs/error.hpp"
#include "sfs/tensor.hpp"

#include <array>
#include <charconv>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sfs {

struct NetworkConfig {
    std::vector<LayerSpec> layers;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

enum ConfigKey : std::size_t { k_name, k_type, k_channels, k_height, k_width, k_kernel, k_stride, k_pad, k_filters, k_count };

inline constexpr std::array<std::string_view, k_count> kConfigKeys = {
    "name", "type", "in_channels", "in_height", "in_width", "kernel", "stride", "pad", "filters"};

struct PendingLayer {
    std::size_t header_line = 0;
    std::array<std::optional<std::string>, k_count> values;
    std::array<std::size_t, k_count> lines{};
};

inline std::size_t parse_extent(const PendingLayer& p, ConfigKey key) {
    const std::string& text = *p.values[key];
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || text.empty())
        throw ParseError(p.lines[key], "key '" + std::string(kConfigKeys[key]) + "': non-integer value '" + text + "'");
    return value;
}

inline LayerSpec finish_layer(const PendingLayer& p) {
    const auto require = [&](ConfigKey key) {
        if (!p.values[key])
            throw ParseError(p.header_line, "layer section is missing required key '" + std::string(kConfigKeys[key]) + "'");
    };
    for (ConfigKey key : {k_name, k_type, k_channels, k_height, k_width, k_filters})
        require(key);

    LayerSpec layer;
    layer.name = *p.values[k_name];
    const std::string& type = *p.values[k_type];
    if (type == "conv")
        layer.kind = LayerKind::conv;
    else if (type == "fc")
        layer.kind = LayerKind::fc;
    else
        throw ParseError(p.lines[k_type], "unknown layer type '" + type + "' (expected conv or fc)");

    layer.channels = parse_extent(p, k_channels);
    layer.height = parse_extent(p, k_height);
    layer.width = parse_extent(p, k_width);
    layer.filters = parse_extent(p, k_filters);
    if (layer.kind == LayerKind::conv) {
        require(k_kernel);
        require(k_stride);
        layer.kernel = parse_extent(p, k_kernel);
        layer.stride = parse_extent(p, k_stride);
        layer.pad = p.values[k_pad] ? parse_extent(p, k_pad) : 0;
    } else {
        const auto forced = [&](ConfigKey key, std::size_t want) {
            if (p.values[key] && parse_extent(p, key) != want)
                throw ParseError(p.lines[key], "fc layer requires " + std::string(kConfigKeys[key]) + " = " +
                                                   std::to_string(want));
        };
        forced(k_kernel, 1);
        forced(k_stride, 1);
        forced(k_pad, 0);
    }
    try {
        layer.validate();
    } catch (const ShapeError& e) {
        throw ParseError(p.header_line, e.what());
    }
    return layer;
}

} // namespace detail

inline NetworkConfig parse_network_config(std::string_view text) {
    NetworkConfig config;
    std::optional<detail::PendingLayer> pending;
    std::set<std::string> names;
    const auto flush = [&] {
        if (!pending)
            return;
        LayerSpec layer = detail::finish_layer(*pending);
        if (!names.insert(layer.name).second)
            throw ParseError(pending->lines[detail::k_name], "duplicate layer name '" + layer.name + "'");
        config.layers.push_back(std::move(layer));
        pending.reset();
    };

    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line != "[layer]")
                throw ParseError(line_no, "unknown section '" + std::string(line) + "'");
            flush();
            pending.emplace();
            pending->header_line = line_no;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError(line_no, "expected key = value");
        if (!pending)
            throw ParseError(line_no, "key outside a [layer] section");
        const std::string_view key = detail::trim(line.substr(0, eq));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        std::size_t k = 0;
        while (k < detail::k_count && detail::kConfigKeys[k] != key)
            ++k;
        if (k == detail::k_count)
            throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
        if (pending->values[k])
            throw ParseError(line_no, "key '" + std::string(key) + "' given twice in one layer");
        if (value.empty())
            throw ParseError(line_no, "key '" + std::string(key) + "' has an empty value");
        pending->values[k] = std::string(value);
        pending->lines[k] = line_no;
    }
    flush();
    return config;
}

// Canonical text form; parse_network_config(render_network_config(c)) == c.
inline std::string render_network_config(const NetworkConfig& config) {
    std::string out;
    for (const auto& l : config.layers) {
        if (!out.empty())
            out += '\n';
        out += "[layer]\n";
        out += "name = " + l.name + "\n";
        out += std::string("type = ") + to_string(l.kind) + "\n";
        out += "in_channels = " + std::to_string(l.channels) + "\n";
        out += "in_height = " + std::to_string(l.height) + "\n";
        out += "in_width = " + std::to_string(l.width) + "\n";
        if (l.kind == LayerKind::conv) {
            out += "kernel = " + std::to_string(l.kernel) + "\n";
            out += "stride = " + std::to_string(l.stride) + "\n";
            out += "pad = " + std::to_string(l.pad) + "\n";
        }
        out += "filters = " + std::to_string(l.filters) + "\n";
    }
    return out;
}

} // namespace sfs
