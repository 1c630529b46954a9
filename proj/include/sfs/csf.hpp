//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Relative-indexed compressed sparse filter (CSF) format.
//
// A batch of m filters is first stacked so that, for every filter position
// p = (chi, r, c), the m weights that position contributes are adjacent. The
// encoded stream keeps, per position, a count `ptr` and one entry per nonzero
// weight holding the weight and the distance from the previous nonzero
// filter index at that position (the first entry stores its absolute index).
// Summing the deltas while streaming yields the output register to update.
//
// Serialized layout, little-endian, packed:
//
//   offset  size  field
//   0       4     magic "CSF1"
//   4       2     version (1)
//   6       1     profile (0 = fc, 1 = conv)
//   7       1     weight format (0 = float32, 1 = shift-quantized float32)
//   8       4     m
//   12      4     C
//   16      4     K
//   20      4     position_count
//   24      ...   per position: ptr (u16), then ptr x {rel_index (u16), weight (f32)}

#include "sfs/error.hpp"
#include "sfs/tensor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sfs {

enum class CsfProfile : std::uint8_t { fc = 0, conv = 1 };
enum class WeightFormat : std::uint8_t { float32 = 0, shift_quantized = 1 };

struct CsfEntry {
    std::uint32_t rel_index = 0;
    float weight = 0.0f;

    friend bool operator==(const CsfEntry& a, const CsfEntry& b) {
        return a.rel_index == b.rel_index && std::bit_cast<std::uint32_t>(a.weight) == std::bit_cast<std::uint32_t>(b.weight);
    }
};

struct CsfPosition {
    std::uint32_t ptr = 0;
    std::vector<CsfEntry> entries;

    friend bool operator==(const CsfPosition&, const CsfPosition&) = default;
};

struct CsfStream {
    CsfProfile profile = CsfProfile::conv;
    WeightFormat format = WeightFormat::float32;
    std::uint32_t m = 0;
    std::uint32_t channels = 0;
    std::uint32_t kernel = 1;
    std::vector<CsfPosition> positions;

    std::size_t position_count() const noexcept { return positions.size(); }

    friend bool operator==(const CsfStream&, const CsfStream&) = default;
};

inline constexpr std::size_t kCsfHeaderBytes = 24;
inline constexpr std::uint16_t kCsfVersion = 1;

// Throws MalformedStream if `s` breaks any format invariant: ptr equal to
// the entry count, nonzero finite weights, strictly increasing absolute
// indices below m, and the position count implied by the profile.
inline void validate(const CsfStream& s) {
    if (s.m == 0 || s.channels == 0 || s.kernel == 0)
        throw MalformedStream("csf: m, C and K must be >= 1");
    if (s.profile == CsfProfile::conv) {
        if (s.position_count() != std::size_t{s.channels} * s.kernel * s.kernel)
            throw MalformedStream("csf: conv stream needs C*K*K = " +
                                  std::to_string(std::size_t{s.channels} * s.kernel * s.kernel) + " positions, has " +
                                  std::to_string(s.position_count()));
    } else {
        if (s.kernel != 1)
            throw MalformedStream("csf: fc stream must have K = 1");
        if (s.position_count() == 0 || s.position_count() % s.channels != 0)
            throw MalformedStream("csf: fc position count must be a nonzero multiple of C");
    }
    for (std::size_t p = 0; p < s.positions.size(); ++p) {
        const auto& pos = s.positions[p];
        if (pos.ptr != pos.entries.size())
            throw MalformedStream("csf: position " + std::to_string(p) + " ptr=" + std::to_string(pos.ptr) + " but " +
                                  std::to_string(pos.entries.size()) + " entries");
        std::uint64_t index = 0;
        for (std::size_t e = 0; e < pos.entries.size(); ++e) {
            const auto& entry = pos.entries[e];
            if (e > 0 && entry.rel_index == 0)
                throw MalformedStream("csf: position " + std::to_string(p) + " repeats a filter index");
            index += entry.rel_index;
            if (index >= s.m)
                throw MalformedStream("csf: position " + std::to_string(p) + " reconstructs filter index " +
                                      std::to_string(index) + " >= m=" + std::to_string(s.m));
            if (entry.weight == 0.0f || !std::isfinite(entry.weight))
                throw MalformedStream("csf: position " + std::to_string(p) + " holds a zero or non-finite weight");
        }
    }
}

inline std::size_t nonzero_count(const CsfStream& s) {
    std::size_t n = 0;
    for (const auto& pos : s.positions)
        n += pos.entries.size();
    return n;
}

// Reindexes filters [batch_start, batch_start + m) of a rank-4 bank
// (M × A × B × C) into the stacked layout A × B × C × m.
inline DenseTensor stack_filters(const DenseTensor& wf, std::size_t batch_start, std::size_t m) {
    if (wf.rank() != 4)
        throw ShapeError("stack_filters: filter bank must be rank 4");
    if (m == 0 || batch_start + m > wf.dim(0))
        throw ShapeError("stack_filters: batch [" + std::to_string(batch_start) + ", " + std::to_string(batch_start + m) +
                         ") out of range for " + std::to_string(wf.dim(0)) + " filters");
    const std::size_t a = wf.dim(1), b = wf.dim(2), c = wf.dim(3);
    const std::size_t per_filter = a * b * c;
    DenseTensor out({a, b, c, m});
    auto dst = out.data();
    const auto src = wf.data();
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t p = 0; p < per_filter; ++p)
            dst[p * m + j] = src[(batch_start + j) * per_filter + p];
    return out;
}

// Inverse of stack_filters: A × B × C × m back to m × A × B × C.
inline DenseTensor unstack_filters(const DenseTensor& stacked) {
    if (stacked.rank() != 4)
        throw ShapeError("unstack_filters: stacked tensor must be rank 4");
    const std::size_t m = stacked.dim(3);
    const std::size_t per_filter = stacked.size() / m;
    DenseTensor out({m, stacked.dim(0), stacked.dim(1), stacked.dim(2)});
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t p = 0; p < per_filter; ++p)
            out.data()[j * per_filter + p] = stacked.data()[p * m + j];
    return out;
}

// Encodes a stacked batch. conv expects C × K × K × m; fc accepts any
// C × H × W × m and flattens positions chi-major. Exact zeros are dropped.
inline CsfStream encode_csf(const DenseTensor& stacked, CsfProfile profile,
                            WeightFormat format = WeightFormat::float32) {
    if (stacked.rank() != 4)
        throw ShapeError("encode_csf: stacked tensor must be rank 4");
    if (profile == CsfProfile::conv && stacked.dim(1) != stacked.dim(2))
        throw ShapeError("encode_csf: conv profile needs a square kernel");
    CsfStream s;
    s.profile = profile;
    s.format = format;
    s.m = static_cast<std::uint32_t>(stacked.dim(3));
    s.channels = static_cast<std::uint32_t>(stacked.dim(0));
    s.kernel = profile == CsfProfile::conv ? static_cast<std::uint32_t>(stacked.dim(1)) : 1;
    const std::size_t positions = stacked.dim(0) * stacked.dim(1) * stacked.dim(2);
    const std::size_t m = stacked.dim(3);
    s.positions.resize(positions);
    const auto w = stacked.data();
    for (std::size_t p = 0; p < positions; ++p) {
        auto& pos = s.positions[p];
        std::size_t previous = 0;
        for (std::size_t j = 0; j < m; ++j) {
            const float v = w[p * m + j];
            if (v == 0.0f)
                continue;
            pos.entries.push_back({static_cast<std::uint32_t>(j - previous), v});
            previous = j;
        }
        pos.ptr = static_cast<std::uint32_t>(pos.entries.size());
    }
    return s;
}

// Dense stacked tensor: C × K × K × m for conv, C × (positions / C) × 1 × m for fc.
inline DenseTensor decode_csf(const CsfStream& s) {
    validate(s);
    const std::size_t c = s.channels;
    DenseTensor out = s.profile == CsfProfile::conv
                          ? DenseTensor({c, s.kernel, s.kernel, s.m})
                          : DenseTensor({c, s.position_count() / c, 1, s.m});
    auto dst = out.data();
    for (std::size_t p = 0; p < s.positions.size(); ++p) {
        std::size_t index = 0;
        for (const auto& e : s.positions[p].entries) {
            index += e.rel_index;
            dst[p * s.m + index] = e.weight;
        }
    }
    return out;
}

inline std::size_t serialized_size(const CsfStream& s) {
    std::size_t n = kCsfHeaderBytes;
    for (const auto& pos : s.positions)
        n += 2 + 6 * pos.entries.size();
    return n;
}

namespace detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
}

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* field) {
        if (bytes_.size() - pos_ < sizeof(T))
            throw MalformedStream(std::string("csf: truncated while reading ") + field + " at byte " +
                                  std::to_string(pos_));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::vector<std::uint8_t> serialize_csf(const CsfStream& s) {
    validate(s);
    if (s.position_count() > UINT32_MAX)
        throw EncodingError("csf: position count exceeds 32 bits");
    std::vector<std::uint8_t> out;
    out.reserve(serialized_size(s));
    for (char ch : std::string_view("CSF1"))
        out.push_back(static_cast<std::uint8_t>(ch));
    detail::put_le<std::uint16_t>(out, kCsfVersion);
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.profile));
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.format));
    detail::put_le<std::uint32_t>(out, s.m);
    detail::put_le<std::uint32_t>(out, s.channels);
    detail::put_le<std::uint32_t>(out, s.kernel);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.position_count()));
    for (std::size_t p = 0; p < s.positions.size(); ++p) {
        const auto& pos = s.positions[p];
        if (pos.ptr > UINT16_MAX)
            throw EncodingError("csf: ptr " + std::to_string(pos.ptr) + " at position " + std::to_string(p) +
                                " exceeds 16 bits");
        detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(pos.ptr));
        for (const auto& e : pos.entries) {
            if (e.rel_index > UINT16_MAX)
                throw EncodingError("csf: relative index " + std::to_string(e.rel_index) + " at position " +
                                    std::to_string(p) + " exceeds 16 bits");
            detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.rel_index));
            detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(e.weight));
        }
    }
    return out;
}

// Parses a complete serialized stream. Truncation, trailing bytes, a bad
// header, or a decoded stream failing validate() all throw MalformedStream.
inline CsfStream deserialize_csf(std::span<const std::uint8_t> bytes) {
    detail::ByteReader in(bytes);
    std::array<char, 4> magic{};
    for (char& ch : magic)
        ch = static_cast<char>(in.get<std::uint8_t>("magic"));
    if (std::string_view(magic.data(), 4) != "CSF1")
        throw MalformedStream("csf: bad magic");
    if (const auto version = in.get<std::uint16_t>("version"); version != kCsfVersion)
        throw MalformedStream("csf: unsupported version " + std::to_string(version));
    CsfStream s;
    const auto profile = in.get<std::uint8_t>("profile");
    if (profile > 1)
        throw MalformedStream("csf: unknown profile " + std::to_string(profile));
    s.profile = static_cast<CsfProfile>(profile);
    const auto format = in.get<std::uint8_t>("dtype");
    if (format > 1)
        throw MalformedStream("csf: unknown dtype " + std::to_string(format));
    s.format = static_cast<WeightFormat>(format);
    s.m = in.get<std::uint32_t>("m");
    s.channels = in.get<std::uint32_t>("C");
    s.kernel = in.get<std::uint32_t>("K");
    const auto count = in.get<std::uint32_t>("position_count");
    // Each record is at least 2 bytes; reject impossible counts before allocating.
    if (std::size_t{count} * 2 > in.remaining())
        throw MalformedStream("csf: truncated, " + std::to_string(count) + " positions declared");
    s.positions.resize(count);
    for (auto& pos : s.positions) {
        pos.ptr = in.get<std::uint16_t>("ptr");
        pos.entries.resize(pos.ptr);
        for (auto& e : pos.entries) {
            e.rel_index = in.get<std::uint16_t>("rel_index");
            e.weight = std::bit_cast<float>(in.get<std::uint32_t>("weight"));
        }
    }
    if (in.remaining() != 0)
        throw MalformedStream("csf: " + std::to_string(in.remaining()) + " trailing bytes");
    validate(s);
    return s;
}

// Power-of-two weight approximation: sign(w) * 2^e with e the nearest
// integer to log2|w| (ties to the smaller exponent), clamped to
// [exp_min, exp_max]. Zeros stay zero.
inline float quantize_shift(float w, int exp_min, int exp_max) {
    if (w == 0.0f)
        return w;
    int exponent = 0;
    const double mantissa = std::frexp(std::abs(static_cast<double>(w)), &exponent); // |w| = mantissa * 2^exponent, mantissa in [0.5, 1)
    int e = exponent - 1;
    if (2.0 * mantissa > std::sqrt(2.0))
        ++e;
    e = std::clamp(e, exp_min, exp_max);
    const float magnitude = std::ldexp(1.0f, e);
    return w < 0.0f ? -magnitude : magnitude;
}

inline DenseTensor quantize_shift(const DenseTensor& wf, int exp_min, int exp_max) {
    if (exp_min > exp_max)
        throw std::invalid_argument("quantize_shift: exp_min > exp_max");
    if (exp_min < -149 || exp_max > 127)
        throw std::invalid_argument("quantize_shift: exponent range outside float32");
    DenseTensor out = wf;
    for (float& w : out.data())
        w = quantize_shift(w, exp_min, exp_max);
    return out;
}

} // namespace sfs
