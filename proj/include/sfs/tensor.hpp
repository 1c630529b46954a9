//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "sfs/error.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sfs {

enum class LayerKind { conv, fc };

inline const char* to_string(LayerKind kind) { return kind == LayerKind::conv ? "conv" : "fc"; }

// Shape and hyperparameters of one CONV or FC layer. Output extents are
// derived (see output_shape), never stored.
struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv;
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t filters = 1;

    static LayerSpec conv(std::string name, std::size_t channels, std::size_t height, std::size_t width,
                          std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t filters) {
        LayerSpec l{std::move(name), LayerKind::conv, channels, height, width, kernel, stride, pad, filters};
        l.validate();
        return l;
    }

    static LayerSpec fc(std::string name, std::size_t channels, std::size_t height, std::size_t width,
                        std::size_t filters) {
        LayerSpec l{std::move(name), LayerKind::fc, channels, height, width, 1, 1, 0, filters};
        l.validate();
        return l;
    }

    // Throws ShapeError when an extent is zero, an fc layer carries a
    // kernel/stride/pad other than 1/1/0, or the kernel exceeds the padded input.
    void validate() const {
        if (channels == 0 || height == 0 || width == 0 || kernel == 0 || stride == 0 || filters == 0)
            throw ShapeError("layer '" + name + "': extents, kernel, stride and filters must be >= 1");
        if (kind == LayerKind::fc && (kernel != 1 || stride != 1 || pad != 0))
            throw ShapeError("layer '" + name + "': fc layers require kernel=1, stride=1, pad=0");
        if (kind == LayerKind::conv && (kernel > width + 2 * pad || kernel > height + 2 * pad))
            throw ShapeError("layer '" + name + "': kernel larger than padded input");
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct OutputShape {
    std::size_t height;
    std::size_t width;
};

// floor((W + 2P - K) / S) + 1 per axis; (1, 1) for fc.
inline OutputShape output_shape(const LayerSpec& layer) {
    layer.validate();
    if (layer.kind == LayerKind::fc)
        return {1, 1};
    return {(layer.height + 2 * layer.pad - layer.kernel) / layer.stride + 1,
            (layer.width + 2 * layer.pad - layer.kernel) / layer.stride + 1};
}

// Dense multiply-accumulate count, full channel depth (no group split).
inline std::uint64_t mac_count(const LayerSpec& layer) {
    const auto out = output_shape(layer);
    const std::uint64_t m = layer.filters;
    const std::uint64_t c = layer.channels;
    if (layer.kind == LayerKind::fc)
        return m * c * layer.height * layer.width;
    const std::uint64_t k = layer.kernel;
    return m * c * k * k * out.height * out.width;
}

// Row-major float32 array, last dimension fastest.
class DenseTensor {
public:
    using Dims = std::vector<std::size_t>;

    DenseTensor() = default;

    explicit DenseTensor(Dims dims) : dims_(std::move(dims)), data_(element_count(dims_), 0.0f) {}

    DenseTensor(Dims dims, std::vector<float> data) : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != element_count(dims_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match dims product " +
                             std::to_string(element_count(dims_)));
        if (!std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); }))
            throw ShapeError("tensor data contains NaN or Inf");
    }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    template <class... Index>
    float& operator()(Index... idx) noexcept {
        return data_[offset(static_cast<std::size_t>(idx)...)];
    }

    template <class... Index>
    float operator()(Index... idx) const noexcept {
        return data_[offset(static_cast<std::size_t>(idx)...)];
    }

    template <class... Index>
    std::size_t offset(Index... idx) const noexcept {
        assert(sizeof...(Index) == dims_.size());
        std::size_t off = 0;
        std::size_t axis = 0;
        for (const std::size_t i : {static_cast<std::size_t>(idx)...}) {
            assert(i < dims_[axis]);
            off = off * dims_[axis++] + i;
        }
        return off;
    }

    // Same data, new extents with an identical element count.
    DenseTensor reshaped(Dims dims) const {
        if (element_count(dims) != data_.size())
            throw ShapeError("reshape changes element count");
        DenseTensor out;
        out.dims_ = std::move(dims);
        out.data_ = data_;
        return out;
    }

    static std::size_t element_count(const Dims& dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
    }

    friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

private:
    Dims dims_;
    std::vector<float> data_;
};

// Equal dims and identical bit patterns in every element.
inline bool bit_equal(const DenseTensor& a, const DenseTensor& b) {
    if (a.dims() != b.dims())
        return false;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i)
        if (std::bit_cast<std::uint32_t>(x[i]) != std::bit_cast<std::uint32_t>(y[i]))
            return false;
    return true;
}

inline double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
    if (a.dims() != b.dims())
        throw ShapeError("max_abs_diff: dims differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return worst;
}

inline std::size_t count_nonzero(const DenseTensor& t) {
    return static_cast<std::size_t>(std::count_if(t.data().begin(), t.data().end(), [](float v) { return v != 0.0f; }));
}

// Copies channel `chi` of a C×H×W tensor into a zero-bordered plane of
// (H + 2P) × (W + 2P), row-major.
inline std::vector<float> padded_channel(const DenseTensor& vi, std::size_t chi, std::size_t pad) {
    const std::size_t h = vi.dim(1);
    const std::size_t w = vi.dim(2);
    const std::size_t pw = w + 2 * pad;
    std::vector<float> plane((h + 2 * pad) * pw, 0.0f);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            plane[(y + pad) * pw + x + pad] = vi(chi, y, x);
    return plane;
}

namespace detail {

inline void expect_dims(const DenseTensor& t, const DenseTensor::Dims& want, const char* what) {
    if (t.dims() != want) {
        std::string msg = std::string(what) + " dims mismatch: got [";
        for (std::size_t i = 0; i < t.rank(); ++i)
            msg += (i ? "," : "") + std::to_string(t.dim(i));
        msg += "] expected [";
        for (std::size_t i = 0; i < want.size(); ++i)
            msg += (i ? "," : "") + std::to_string(want[i]);
        throw ShapeError(msg + "]");
    }
}

} // namespace detail

// Dense convolution reference. For each output element the sum runs over
// channels; each channel's K×K window is summed (r-major) into a partial that
// is then added to the running total. The sparse engine groups its
// arithmetic identically, so the two agree bit-for-bit.
inline DenseTensor dense_conv(const DenseTensor& vi, const DenseTensor& wf, const LayerSpec& layer) {
    if (layer.kind != LayerKind::conv)
        throw ShapeError("dense_conv: layer '" + layer.name + "' is not conv");
    const auto out = output_shape(layer);
    const std::size_t c_n = layer.channels;
    const std::size_t k = layer.kernel;
    const std::size_t s = layer.stride;
    detail::expect_dims(vi, {c_n, layer.height, layer.width}, "dense_conv input");
    detail::expect_dims(wf, {layer.filters, c_n, k, k}, "dense_conv filters");

    std::vector<std::vector<float>> planes;
    planes.reserve(c_n);
    for (std::size_t chi = 0; chi < c_n; ++chi)
        planes.push_back(padded_channel(vi, chi, layer.pad));
    const std::size_t pw = layer.width + 2 * layer.pad;

    DenseTensor vo({layer.filters, out.height, out.width});
    for (std::size_t j = 0; j < layer.filters; ++j) {
        for (std::size_t y = 0; y < out.height; ++y) {
            for (std::size_t x = 0; x < out.width; ++x) {
                float acc = 0.0f;
                for (std::size_t chi = 0; chi < c_n; ++chi) {
                    const float* plane = planes[chi].data();
                    const float* w = &wf.data()[wf.offset(j, chi, std::size_t{0}, std::size_t{0})];
                    float partial = 0.0f;
                    for (std::size_t r = 0; r < k; ++r)
                        for (std::size_t c = 0; c < k; ++c)
                            partial += w[r * k + c] * plane[(s * y + r) * pw + s * x + c];
                    acc += partial;
                }
                vo(j, y, x) = acc;
            }
        }
    }
    return vo;
}

// Dense FC reference: output j is the dot product of filter j with the
// flattened input, accumulated in chi, row, column order.
inline DenseTensor dense_fc(const DenseTensor& vi, const DenseTensor& wf, const LayerSpec& layer) {
    if (layer.kind != LayerKind::fc)
        throw ShapeError("dense_fc: layer '" + layer.name + "' is not fc");
    layer.validate();
    detail::expect_dims(vi, {layer.channels, layer.height, layer.width}, "dense_fc input");
    detail::expect_dims(wf, {layer.filters, layer.channels, layer.height, layer.width}, "dense_fc filters");
    const std::size_t n = vi.size();
    DenseTensor vo({layer.filters, 1, 1});
    for (std::size_t j = 0; j < layer.filters; ++j) {
        const float* w = wf.data().data() + j * n;
        float acc = 0.0f;
        for (std::size_t p = 0; p < n; ++p)
            acc += w[p] * vi.data()[p];
        vo(j, 0, 0) = acc;
    }
    return vo;
}

// Deterministic generator scheme shared by the synthetic data helpers:
// std::mt19937_64 seeded with `seed`; per element one 64-bit draw `a` decides
// presence ((a >> 11) * 2^-53 < density), and present elements take a second
// draw `b` whose top 24 bits k give the value (2k + 1 - 2^24) / 2^24, which is
// uniform over (-1, 1), exactly representable and never zero.
namespace detail {

inline float draw_nonzero_unit(std::mt19937_64& rng) {
    const auto k = static_cast<std::int64_t>(rng() >> 40);
    return static_cast<float>(static_cast<double>(2 * k + 1 - (std::int64_t{1} << 24)) / double(1 << 24));
}

inline double draw_unit_interval(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace detail

// Filter bank M×C×K×K (conv) or M×C×H×W (fc) where each weight is
// independently nonzero with probability `density`.
inline DenseTensor random_sparse_filters(const LayerSpec& layer, double density, std::uint64_t seed) {
    if (!(density >= 0.0 && density <= 1.0))
        throw std::invalid_argument("density must lie in [0, 1]");
    layer.validate();
    DenseTensor::Dims dims = layer.kind == LayerKind::conv
                                 ? DenseTensor::Dims{layer.filters, layer.channels, layer.kernel, layer.kernel}
                                 : DenseTensor::Dims{layer.filters, layer.channels, layer.height, layer.width};
    DenseTensor wf(std::move(dims));
    std::mt19937_64 rng(seed);
    for (float& w : wf.data())
        if (detail::draw_unit_interval(rng) < density)
            w = detail::draw_nonzero_unit(rng);
    return wf;
}

// Dense tensor of nonzero values uniform over (-1, 1).
inline DenseTensor random_tensor(DenseTensor::Dims dims, std::uint64_t seed) {
    DenseTensor t(std::move(dims));
    std::mt19937_64 rng(seed);
    for (float& v : t.data())
        v = detail::draw_nonzero_unit(rng);
    return t;
}

// Input feature map C×H×W for `layer`.
inline DenseTensor random_features(const LayerSpec& layer, std::uint64_t seed) {
    return random_tensor({layer.channels, layer.height, layer.width}, seed);
}

} // namespace sfs
