//
// SPDX-License-Identifier: Apache-2.0
//

#include "oracles.hpp"
#include "sfs/engine.hpp"

#include <gtest/gtest.h>

namespace sfs {
namespace {

CsfStream conv_stream(const DenseTensor& wf) {
    return encode_csf(stack_filters(wf, 0, wf.dim(0)), CsfProfile::conv);
}

CsfStream fc_stream(const DenseTensor& wf) { return encode_csf(stack_filters(wf, 0, wf.dim(0)), CsfProfile::fc); }

void expect_trace_identity(const TraceCounters& t) {
    EXPECT_EQ(t.weight_loads, t.index_loads);
    EXPECT_EQ(t.macs_executed, t.weight_loads);
}

TEST(RunFc, EmptyStream) {
    const auto l = LayerSpec::fc("f", 2, 3, 3, 5);
    const auto r = run_fc(fc_stream(DenseTensor({5, 2, 3, 3})), random_features(l, 1));
    for (float v : r.output.data())
        EXPECT_EQ(v, 0.0f);
    EXPECT_EQ(r.trace.macs_executed, 0u);
    EXPECT_EQ(r.trace.feature_loads, 18u);
    EXPECT_EQ(r.trace.pointer_loads, 18u);
}

TEST(RunFc, SingleEntry) {
    const auto l = LayerSpec::fc("f", 1, 2, 2, 4);
    DenseTensor wf({4, 1, 2, 2});
    wf(2, 0, 1, 0) = 0.75f; // filter 2, position 2
    const auto vi = random_features(l, 2);
    const auto r = run_fc(fc_stream(wf), vi);
    for (std::size_t j = 0; j < 4; ++j)
        EXPECT_EQ(r.output.data()[j], j == 2 ? 0.75f * vi.data()[2] : 0.0f);
    EXPECT_EQ(r.trace.macs_executed, 1u);
}

TEST(RunFc, MatchesDenseFcBitExactly) {
    const auto l = LayerSpec::fc("f", 2, 4, 4, 16); // N = 32
    const auto wf = random_sparse_filters(l, 0.3, 3);
    const auto vi = random_features(l, 4);
    const auto r = run_fc(fc_stream(wf), vi);
    EXPECT_TRUE(bit_equal(r.output, dense_fc(vi, wf, l)));
    EXPECT_TRUE(bit_equal(r.output, oracle::matvec(vi, wf)));
    EXPECT_EQ(r.trace.macs_executed, count_nonzero(wf));
    EXPECT_EQ(r.trace.feature_loads, 32u);
    expect_trace_identity(r.trace);
}

TEST(RunFc, RejectsMismatch) {
    const auto wf = DenseTensor({3, 2, 2, 2});
    EXPECT_THROW(run_fc(fc_stream(wf), DenseTensor({2, 2, 3})), ShapeError);
    EXPECT_THROW(run_fc(conv_stream(DenseTensor({3, 2, 2, 2})), DenseTensor({2, 2, 2})), ShapeError);
}

TEST(Simd3dStep, ZeroWindowStillStreamsWeights) {
    const auto l = LayerSpec::conv("s", 1, 3, 3, 3, 1, 0, 4);
    const auto wf = random_sparse_filters(l, 0.5, 5);
    const auto stream = conv_stream(wf);
    EngineContext ctx(l, stream);
    ctx.buffer_channel(DenseTensor({1, 3, 3}), 0);
    const auto regs = ctx.simd3d_step(0, 0, 0);
    for (float v : regs)
        EXPECT_EQ(v, 0.0f);
    EXPECT_EQ(ctx.trace().weight_loads, nonzero_count(stream));
    EXPECT_EQ(ctx.trace().feature_loads, 9u);
    EXPECT_EQ(ctx.trace().simd_instructions, 1u);
}

TEST(Simd3dStep, SingleEntryKernelOne) {
    const auto l = LayerSpec::conv("s", 1, 2, 2, 1, 1, 0, 4);
    DenseTensor wf({4, 1, 1, 1});
    wf(2, 0, 0, 0) = 3.0f;
    const auto stream = conv_stream(wf);
    const DenseTensor vi({1, 2, 2}, {0.5f, -1.0f, 2.0f, 4.0f});
    EngineContext ctx(l, stream);
    ctx.buffer_channel(vi, 0);
    const auto regs = ctx.simd3d_step(0, 1, 0);
    EXPECT_EQ(regs[2], 3.0f * 2.0f);
    EXPECT_EQ(regs[0], 0.0f);
    EXPECT_EQ(ctx.global_buffer()(2, 1, 0), 6.0f);
}

TEST(Simd3dStep, DenseOnesSumNineTerms) {
    const auto l = LayerSpec::conv("s", 1, 3, 3, 3, 1, 0, 2);
    DenseTensor wf({2, 1, 3, 3});
    std::fill(wf.data().begin(), wf.data().end(), 1.0f);
    DenseTensor vi({1, 3, 3});
    std::fill(vi.data().begin(), vi.data().end(), 1.0f);
    const auto stream = conv_stream(wf);
    EngineContext ctx(l, stream);
    ctx.buffer_channel(vi, 0);
    const auto regs = ctx.simd3d_step(0, 0, 0);
    EXPECT_EQ(regs[0], 9.0f);
    EXPECT_EQ(regs[1], 9.0f);
}

TEST(Simd3dStep, RegistersResetAndGlobalBufferAccumulatesAcrossChannels) {
    const auto l = LayerSpec::conv("s", 2, 1, 1, 1, 1, 0, 1);
    const DenseTensor wf({1, 2, 1, 1}, {2.0f, 5.0f});
    const DenseTensor vi({2, 1, 1}, {1.0f, 10.0f});
    const auto stream = conv_stream(wf);
    EngineContext ctx(l, stream);
    ctx.buffer_channel(vi, 0);
    EXPECT_EQ(ctx.simd3d_step(0, 0, 0)[0], 2.0f);
    ctx.buffer_channel(vi, 1);
    EXPECT_EQ(ctx.simd3d_step(1, 0, 0)[0], 50.0f);
    EXPECT_EQ(ctx.global_buffer()(0, 0, 0), 52.0f);
}

TEST(Simd3dStep, WindowAndChannelErrors) {
    const auto l = LayerSpec::conv("s", 2, 4, 4, 3, 1, 0, 2);
    const auto stream = conv_stream(random_sparse_filters(l, 0.5, 6));
    EngineContext ctx(l, stream);
    EXPECT_THROW(ctx.simd3d_step(0, 0, 0), ShapeError); // nothing buffered
    ctx.buffer_channel(random_features(l, 7), 0);
    EXPECT_THROW(ctx.simd3d_step(1, 0, 0), ShapeError);
    EXPECT_THROW(ctx.simd3d_step(0, 2, 0), ShapeError);
    EXPECT_THROW(ctx.simd3d_step(0, 0, 2), ShapeError);
    EXPECT_NO_THROW(ctx.simd3d_step(0, 1, 1));
    EXPECT_THROW(ctx.buffer_channel(random_features(l, 7), 2), ShapeError);
}

TEST(RunConv, MatchesDenseConvBitExactly) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto l = LayerSpec::conv("c", 4, 8, 8, 3, 1, 0, 8);
        const auto wf = random_sparse_filters(l, 0.4, seed);
        const auto vi = random_features(l, seed + 100);
        const auto stream = conv_stream(wf);
        const auto r = run_conv(stream, vi, l);
        ASSERT_TRUE(bit_equal(r.output, dense_conv(vi, unstack_filters(decode_csf(stream)), l)));
        ASSERT_TRUE(bit_equal(r.output, oracle::conv(vi, wf, 1, 0)));
        EXPECT_EQ(r.trace.simd_instructions, 4u * 6 * 6);
        EXPECT_EQ(r.trace.feature_loads, 4u * 6 * 6 * 9);
        EXPECT_EQ(r.trace.macs_executed, count_nonzero(wf) * 36);
        expect_trace_identity(r.trace);
    }
}

TEST(RunConv, KernelOneSumsChannels) {
    const auto l = LayerSpec::conv("k1", 3, 4, 5, 1, 1, 0, 1);
    DenseTensor wf({1, 3, 1, 1});
    std::fill(wf.data().begin(), wf.data().end(), 1.0f);
    const auto vi = random_features(l, 8);
    const auto r = run_conv(conv_stream(wf), vi, l);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 5; ++x)
            EXPECT_EQ(r.output(0, y, x), (0.0f + vi(0, y, x)) + vi(1, y, x) + vi(2, y, x));
}

TEST(RunConv, DenseAlexNetConv1MacCount) {
    const auto l = LayerSpec::conv("CONV1", 3, 227, 227, 11, 4, 0, 96);
    const auto r = run_conv(conv_stream(random_sparse_filters(l, 1.0, 9)), random_features(l, 10), l);
    EXPECT_EQ(r.trace.macs_executed, 105'415'200u);
    EXPECT_EQ(r.trace.macs_executed, mac_count(l));
    expect_trace_identity(r.trace);
}

TEST(RunConv, RejectsMismatchedStreamAndInput) {
    const auto l = LayerSpec::conv("c", 2, 5, 5, 3, 1, 0, 2);
    const auto stream = conv_stream(random_sparse_filters(l, 0.5, 11));
    EXPECT_THROW(run_conv(stream, DenseTensor({3, 5, 5}), l), ShapeError);
    EXPECT_THROW(run_conv(stream, random_features(l, 1), LayerSpec::conv("c", 2, 5, 5, 1, 1, 0, 2)), ShapeError);
    EXPECT_THROW(run_conv(fc_stream(DenseTensor({2, 2, 3, 3})), random_features(l, 1), l), ShapeError);
    auto broken = stream;
    broken.positions[0].entries.push_back({5, 1.0f});
    broken.positions[0].ptr += 1;
    EXPECT_THROW(run_conv(broken, random_features(l, 1), l), MalformedStream);
}

TEST(RunLayerBatched, FullBatchEqualsSingleRun) {
    const auto l = LayerSpec::conv("b", 3, 7, 7, 3, 2, 1, 6);
    const auto wf = random_sparse_filters(l, 0.5, 12);
    const auto vi = random_features(l, 13);
    const auto whole = run_layer_batched(wf, vi, l, 6);
    const auto single = run_conv(conv_stream(wf), vi, l);
    EXPECT_TRUE(bit_equal(whole.output, single.output));
    EXPECT_EQ(whole.trace, single.trace);
}

TEST(RunLayerBatched, SingleFilterBatchesMatchOracle) {
    const auto l = LayerSpec::conv("b", 3, 7, 7, 3, 1, 1, 5);
    const auto wf = random_sparse_filters(l, 0.5, 14);
    const auto vi = random_features(l, 15);
    EXPECT_TRUE(bit_equal(run_layer_batched(wf, vi, l, 1).output, dense_conv(vi, wf, l)));
}

TEST(RunLayerBatched, CeilingSplit) {
    const auto l = LayerSpec::conv("b", 2, 5, 5, 3, 1, 0, 8);
    std::vector<std::uint32_t> sizes;
    const auto r = run_layer_batched(random_sparse_filters(l, 0.5, 16), random_features(l, 17), l, 3,
                                     [&](CsfStream& s, std::size_t) { sizes.push_back(s.m); });
    EXPECT_EQ(sizes, (std::vector<std::uint32_t>{3, 3, 2}));
    EXPECT_EQ(r.output.dims(), (DenseTensor::Dims{8, 3, 3}));
    EXPECT_THROW(run_layer_batched(DenseTensor({8, 2, 3, 3}), random_features(l, 1), l, 0), ShapeError);
    EXPECT_THROW(run_layer_batched(DenseTensor({8, 2, 3, 3}), random_features(l, 1), l, 9), ShapeError);
}

TEST(RunLayerBatched, FcBatches) {
    const auto l = LayerSpec::fc("f", 3, 2, 2, 10);
    const auto wf = random_sparse_filters(l, 0.5, 18);
    const auto vi = random_features(l, 19);
    const auto oracle = dense_fc(vi, wf, l);
    for (std::size_t m : {1u, 3u, 10u})
        EXPECT_TRUE(bit_equal(run_layer_batched(wf, vi, l, m).output, oracle)) << m;
}

// Randomized properties over small layers: oracle equivalence, batch
// invariance, trace identity and zero skipping.
TEST(EngineProperties, RandomizedLayers) {
    std::mt19937 rng(20);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t k = std::array<std::size_t, 3>{1, 3, 5}[rng() % 3];
        const std::size_t s = 1 + rng() % 3, p = rng() % 3;
        const std::size_t h = std::max<std::size_t>(k, 3 + rng() % 8), w = std::max<std::size_t>(k, 3 + rng() % 8);
        const std::size_t c = 1 + rng() % 4, m = 1 + rng() % 12;
        const double density = std::array<double, 4>{0.0, 0.1, 0.5, 1.0}[rng() % 4];
        const auto l = LayerSpec::conv("p", c, h, w, k, s, p, m);
        const auto wf = random_sparse_filters(l, density, rng());
        const auto vi = random_features(l, rng());
        const auto reference = dense_conv(vi, wf, l);
        const auto out = output_shape(l);
        const auto a = run_layer_batched(wf, vi, l, m);
        const auto b = run_layer_batched(wf, vi, l, 1 + rng() % m);
        ASSERT_TRUE(bit_equal(a.output, reference)) << "trial " << trial;
        ASSERT_TRUE(bit_equal(b.output, a.output)) << "trial " << trial;
        ASSERT_EQ(a.trace.macs_executed, count_nonzero(wf) * out.height * out.width);
        ASSERT_EQ(b.trace.macs_executed, a.trace.macs_executed);
        expect_trace_identity(a.trace);
        expect_trace_identity(b.trace);
    }
}

} // namespace
} // namespace sfs
