//
// SPDX-License-Identifier: Apache-2.0
//

#include "oracles.hpp"
#include "sfs/csf.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace sfs {
namespace {

CsfStream single_position_stream(std::uint32_t m, std::vector<CsfEntry> entries) {
    CsfStream s;
    s.profile = CsfProfile::conv;
    s.m = m;
    s.channels = 1;
    s.kernel = 1;
    s.positions.resize(1);
    s.positions[0].ptr = static_cast<std::uint32_t>(entries.size());
    s.positions[0].entries = std::move(entries);
    return s;
}

std::vector<std::size_t> absolute_indices(const CsfPosition& pos) {
    std::vector<std::size_t> out;
    std::size_t index = 0;
    for (const auto& e : pos.entries)
        out.push_back(index += e.rel_index);
    return out;
}

TEST(StackFilters, SingleFilter) {
    const auto wf = oracle::sparse_tensor({5, 2, 3, 3}, 0.8, 1);
    const auto s = stack_filters(wf, 2, 1);
    ASSERT_EQ(s.dims(), (DenseTensor::Dims{2, 3, 3, 1}));
    for (std::size_t chi = 0; chi < 2; ++chi)
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c)
                EXPECT_EQ(s(chi, r, c, 0), wf(2, chi, r, c));
}

TEST(StackFilters, IndexMapMatchesDirectLoop) {
    const auto wf = oracle::sparse_tensor({12, 3, 3, 3}, 1.0, 2);
    const std::size_t b = 4;
    const auto s = stack_filters(wf, b, 6);
    EXPECT_EQ(s(1, 2, 0, 3), wf(b + 3, 1, 2, 0));
    for (std::size_t chi = 0; chi < 3; ++chi)
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t j = 0; j < 6; ++j)
                    ASSERT_EQ(s(chi, r, c, j), wf(b + j, chi, r, c));
}

TEST(StackFilters, UnstackRestoresBatch) {
    const auto wf = oracle::sparse_tensor({9, 4, 2, 2}, 0.5, 3);
    const auto back = unstack_filters(stack_filters(wf, 3, 5));
    ASSERT_EQ(back.dims(), (DenseTensor::Dims{5, 4, 2, 2}));
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t p = 0; p < 16; ++p)
            EXPECT_EQ(back.data()[j * 16 + p], wf.data()[(3 + j) * 16 + p]);
}

TEST(StackFilters, RejectsOutOfRangeBatch) {
    const DenseTensor wf({4, 1, 1, 1});
    EXPECT_THROW(stack_filters(wf, 2, 3), ShapeError);
    EXPECT_THROW(stack_filters(wf, 0, 0), ShapeError);
    EXPECT_THROW(stack_filters(DenseTensor({4, 1, 1}), 0, 1), ShapeError);
}

TEST(EncodeCsf, AllZeroBatch) {
    const auto s = encode_csf(DenseTensor({2, 3, 3, 4}), CsfProfile::conv);
    EXPECT_EQ(s.position_count(), 18u);
    for (const auto& pos : s.positions) {
        EXPECT_EQ(pos.ptr, 0u);
        EXPECT_TRUE(pos.entries.empty());
    }
}

TEST(EncodeCsf, DenseBatchHasConsecutiveDeltas) {
    const auto stacked = stack_filters(oracle::sparse_tensor({4, 2, 3, 3}, 1.0, 4), 0, 4);
    const auto s = encode_csf(stacked, CsfProfile::conv);
    for (const auto& pos : s.positions) {
        ASSERT_EQ(pos.ptr, 4u);
        std::vector<std::uint32_t> deltas;
        for (const auto& e : pos.entries)
            deltas.push_back(e.rel_index);
        EXPECT_EQ(deltas, (std::vector<std::uint32_t>{0, 1, 1, 1}));
    }
}

TEST(EncodeCsf, RandomBatchCountsAndRoundTrip) {
    const auto stacked = oracle::sparse_tensor({2, 3, 3, 8}, 0.25, 5);
    const auto s = encode_csf(stacked, CsfProfile::conv);
    std::size_t direct = 0;
    for (float v : stacked.data())
        direct += v != 0.0f;
    EXPECT_EQ(nonzero_count(s), direct);
    EXPECT_TRUE(bit_equal(decode_csf(s), stacked));
}

TEST(EncodeCsf, FcProfileFlattensPositions) {
    const auto stacked = oracle::sparse_tensor({3, 4, 5, 6}, 0.4, 6);
    const auto s = encode_csf(stacked, CsfProfile::fc);
    EXPECT_EQ(s.kernel, 1u);
    EXPECT_EQ(s.position_count(), 60u);
    EXPECT_TRUE(bit_equal(decode_csf(s), stacked.reshaped({3, 20, 1, 6})));
}

TEST(DecodeCsf, SingleEntry) {
    const auto dense = decode_csf(single_position_stream(4, {{3, 2.5f}}));
    ASSERT_EQ(dense.dims(), (DenseTensor::Dims{1, 1, 1, 4}));
    EXPECT_EQ(dense(0, 0, 0, 3), 2.5f);
    EXPECT_EQ(count_nonzero(dense), 1u);
}

TEST(DecodeCsf, RejectsIndexPastBatch) {
    EXPECT_THROW(decode_csf(single_position_stream(4, {{0, 1.0f}, {2, 1.0f}, {2, 1.0f}})), MalformedStream);
}

TEST(DecodeCsf, RejectsPtrMismatchAndRepeats) {
    auto s = single_position_stream(4, {{1, 1.0f}});
    s.positions[0].ptr = 2;
    EXPECT_THROW(decode_csf(s), MalformedStream);
    EXPECT_THROW(decode_csf(single_position_stream(4, {{1, 1.0f}, {0, 1.0f}})), MalformedStream);
    EXPECT_THROW(decode_csf(single_position_stream(4, {{1, 0.0f}})), MalformedStream);
    auto wrong_count = single_position_stream(4, {});
    wrong_count.kernel = 2;
    EXPECT_THROW(decode_csf(wrong_count), MalformedStream);
}

TEST(CsfProperties, RoundTripMonotoneAndConserved) {
    std::mt19937 rng(7);
    for (double density : {0.0, 0.05, 0.5, 1.0}) {
        for (int trial = 0; trial < 25; ++trial) {
            const std::size_t c = 1 + rng() % 4, k = 1 + rng() % 4, m = 1 + rng() % 40;
            const auto stacked = oracle::sparse_tensor({c, k, k, m}, density, rng());
            const auto s = encode_csf(stacked, CsfProfile::conv);
            ASSERT_TRUE(bit_equal(decode_csf(s), stacked));
            std::size_t sum = 0;
            for (const auto& pos : s.positions) {
                sum += pos.ptr;
                const auto idx = absolute_indices(pos);
                for (std::size_t i = 1; i < idx.size(); ++i)
                    ASSERT_LT(idx[i - 1], idx[i]);
                if (!idx.empty()) {
                    ASSERT_LT(idx.back(), m);
                }
            }
            ASSERT_EQ(sum, count_nonzero(stacked));
        }
    }
}

// Layout hand-assembled field by field for an all-zero conv stream with
// m = 2, C = 1, K = 1: a 24-byte header and a single 16-bit zero ptr.
TEST(SerializeCsf, GoldenEmptyStream) {
    const auto s = encode_csf(DenseTensor({1, 1, 1, 2}), CsfProfile::conv);
    const std::vector<std::uint8_t> golden = {
        'C', 'S', 'F', '1', // magic
        0x01, 0x00,         // version
        0x01,               // profile conv
        0x00,               // dtype float32
        0x02, 0x00, 0x00, 0x00, // m
        0x01, 0x00, 0x00, 0x00, // C
        0x01, 0x00, 0x00, 0x00, // K
        0x01, 0x00, 0x00, 0x00, // position_count
        0x00, 0x00,             // ptr[0]
    };
    EXPECT_EQ(serialize_csf(s), golden);
    EXPECT_EQ(serialized_size(s), 26u);
    EXPECT_EQ(deserialize_csf(golden), s);
}

TEST(SerializeCsf, EntryBytes) {
    auto s = single_position_stream(8, {{5, -1.5f}});
    s.format = WeightFormat::shift_quantized;
    const auto bytes = serialize_csf(s);
    ASSERT_EQ(bytes.size(), 24u + 2 + 6);
    EXPECT_EQ(bytes[7], 1); // dtype
    EXPECT_EQ(bytes[24], 1);
    EXPECT_EQ(bytes[25], 0);
    EXPECT_EQ(bytes[26], 5);
    EXPECT_EQ(bytes[27], 0);
    // -1.5f = 0xBFC00000, little-endian
    EXPECT_EQ((std::vector<std::uint8_t>(bytes.begin() + 28, bytes.end())),
              (std::vector<std::uint8_t>{0x00, 0x00, 0xC0, 0xBF}));
}

TEST(SerializeCsf, RoundTripOverSeeds) {
    std::mt19937 rng(8);
    for (std::uint32_t seed = 0; seed < 120; ++seed) {
        const std::size_t c = 1 + rng() % 5, k = 1 + rng() % 5, m = 1 + rng() % 70;
        const bool fc = seed % 3 == 0;
        const auto stacked = oracle::sparse_tensor({c, k, fc ? k + 1 : k, m}, (seed % 10) / 9.0, seed);
        const auto s = encode_csf(stacked, fc ? CsfProfile::fc : CsfProfile::conv);
        const auto bytes = serialize_csf(s);
        ASSERT_EQ(bytes.size(), serialized_size(s));
        ASSERT_EQ(bytes.size(), kCsfHeaderBytes + 2 * s.position_count() + 6 * nonzero_count(s));
        ASSERT_EQ(deserialize_csf(bytes), s);
    }
}

TEST(SerializeCsf, TruncationNeverYieldsPartialStream) {
    const auto s = encode_csf(oracle::sparse_tensor({2, 3, 3, 5}, 0.5, 9), CsfProfile::conv);
    const auto bytes = serialize_csf(s);
    for (std::size_t n = 0; n < bytes.size(); ++n)
        EXPECT_THROW(deserialize_csf(std::span(bytes.data(), n)), MalformedStream) << "length " << n;
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_THROW(deserialize_csf(extra), MalformedStream);
}

TEST(SerializeCsf, RejectsBadHeader) {
    auto bytes = serialize_csf(encode_csf(DenseTensor({1, 1, 1, 2}), CsfProfile::conv));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_csf(bad_magic), MalformedStream);
    auto bad_version = bytes;
    bad_version[4] = 2;
    EXPECT_THROW(deserialize_csf(bad_version), MalformedStream);
    auto bad_profile = bytes;
    bad_profile[6] = 7;
    EXPECT_THROW(deserialize_csf(bad_profile), MalformedStream);
    auto bad_m = bytes;
    bad_m[8] = 0;
    EXPECT_THROW(deserialize_csf(bad_m), MalformedStream);
}

TEST(SerializeCsf, FieldWidthOverflow) {
    // 65536 nonzeros at one position overflow the 16-bit ptr.
    DenseTensor dense({1, 1, 1, 65536});
    std::fill(dense.data().begin(), dense.data().end(), 1.0f);
    EXPECT_THROW(serialize_csf(encode_csf(dense, CsfProfile::conv)), EncodingError);
    // A first index of 65536 does not fit the 16-bit relative index.
    DenseTensor gap({1, 1, 1, 70000});
    gap(0, 0, 0, 65536) = 1.0f;
    EXPECT_THROW(serialize_csf(encode_csf(gap, CsfProfile::conv)), EncodingError);
    DenseTensor ok({1, 1, 1, 65536});
    ok(0, 0, 0, 65535) = 1.0f;
    EXPECT_NO_THROW(serialize_csf(encode_csf(ok, CsfProfile::conv)));
}

TEST(QuantizeShift, Examples) {
    EXPECT_EQ(quantize_shift(0.5f, -10, 10), 0.5f);
    EXPECT_EQ(quantize_shift(0.0f, -10, 10), 0.0f);
    EXPECT_EQ(quantize_shift(-3.0f, -10, 10), -4.0f);
    EXPECT_EQ(quantize_shift(1.4f, -10, 10), 1.0f); // log2 1.4 = 0.485
    EXPECT_EQ(quantize_shift(1.5f, -10, 10), 2.0f); // log2 1.5 = 0.585
    EXPECT_EQ(quantize_shift(0.3f, -10, 10), 0.25f);
}

TEST(QuantizeShift, RoundingBoundaryAtSqrtTwo) {
    const float root2 = static_cast<float>(std::sqrt(2.0));
    const float below = root2 < std::sqrt(2.0) ? root2 : std::nextafter(root2, 0.0f);
    const float above = std::nextafter(below, 2.0f);
    EXPECT_EQ(quantize_shift(below, -10, 10), 1.0f);
    EXPECT_EQ(quantize_shift(above, -10, 10), 2.0f);
}

TEST(QuantizeShift, ClampsExponent) {
    EXPECT_EQ(quantize_shift(100.0f, -4, 3), 8.0f);
    EXPECT_EQ(quantize_shift(-1e-5f, -4, 3), -0.0625f);
    EXPECT_THROW(quantize_shift(DenseTensor({1}), 2, 1), std::invalid_argument);
}

TEST(QuantizeShift, OutputsArePowersOfTwoInRange) {
    const auto wf = oracle::sparse_tensor({8, 4, 3, 3}, 0.7, 10);
    const int lo = -6, hi = 1;
    const auto q = quantize_shift(wf, lo, hi);
    for (std::size_t i = 0; i < wf.size(); ++i) {
        const float w = wf.data()[i], v = q.data()[i];
        if (w == 0.0f) {
            EXPECT_EQ(v, 0.0f);
            continue;
        }
        int e = 0;
        EXPECT_EQ(std::frexp(std::abs(v), &e), 0.5f);
        EXPECT_GE(e - 1, lo);
        EXPECT_LE(e - 1, hi);
        EXPECT_EQ(std::signbit(v), std::signbit(w));
        // Within range the nearest-in-log2 choice is off by at most sqrt(2).
        if (std::abs(w) >= std::ldexp(1.0f, lo) && std::abs(w) <= std::ldexp(1.0f, hi)) {
            const double ratio = std::abs(static_cast<double>(v) / w);
            EXPECT_LE(std::max(ratio, 1.0 / ratio), std::sqrt(2.0) + 1e-12);
        }
    }
}

} // namespace
} // namespace sfs
