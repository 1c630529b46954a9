//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Raw weight dumps: 16-byte header of four little-endian u32 extents
// (M, C, K, K for a conv bank) followed by the float32 values, row-major,
// little-endian.

#include "sfs/csf.hpp"
#include "sfs/error.hpp"
#include "sfs/tensor.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

namespace sfs {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot create '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("write to '" + path.string() + "' failed");
}

inline std::vector<std::uint8_t> encode_weights(const DenseTensor& wf) {
    if (wf.rank() != 4)
        throw ShapeError("weights file holds rank-4 banks only");
    std::vector<std::uint8_t> out;
    out.reserve(16 + 4 * wf.size());
    for (std::size_t d : wf.dims()) {
        if (d > UINT32_MAX)
            throw EncodingError("weights file extent exceeds 32 bits");
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (float v : wf.data())
        detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline DenseTensor decode_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16)
        throw MalformedStream("weights file shorter than its 16-byte header");
    detail::ByteReader in(bytes);
    DenseTensor::Dims dims(4);
    for (auto& d : dims)
        d = in.get<std::uint32_t>("extent");
    const std::size_t n = DenseTensor::element_count(dims);
    if (in.remaining() != 4 * n)
        throw MalformedStream("weights file: header promises " + std::to_string(n) + " values, payload has " +
                              std::to_string(in.remaining()) + " bytes");
    std::vector<float> values(n);
    for (float& v : values)
        v = std::bit_cast<float>(in.get<std::uint32_t>("value"));
    return DenseTensor(std::move(dims), std::move(values));
}

inline DenseTensor read_weights_file(const std::filesystem::path& path) { return decode_weights(read_file_bytes(path)); }

inline void write_weights_file(const std::filesystem::path& path, const DenseTensor& wf) {
    write_file_bytes(path, encode_weights(wf));
}

} // namespace sfs
