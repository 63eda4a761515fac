// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "oracle.hpp"
#include "prospector/metrics.hpp"
#include "support.hpp"

namespace prospector {
namespace {

using testing::chain;
using testing::conv_node;
using testing::dense_node;
using testing::depthwise_node;
using testing::simple_node;

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no Error thrown";
    return ErrorCode::InvalidArgument;
}

TEST(SpotCheck, ConvSame) {
    const auto g = chain({conv_node(0, "conv", 2, 3, 1, "same", 3)}, {1, 3, 8, 8});
    const auto s = model_stats(g);
    EXPECT_EQ(s.total_macs, 3456);
    EXPECT_EQ(s.total_flops, 6912);
    EXPECT_EQ(s.total_params, 56);
    EXPECT_EQ(s.per_layer[0].out_shape, (Shape{1, 2, 8, 8}));
}

TEST(SpotCheck, Dense) {
    const auto g = chain({dense_node(0, "fc", 4, 3)}, {1, 4});
    const auto s = model_stats(g);
    EXPECT_EQ(s.total_macs, 12);
    EXPECT_EQ(s.total_flops, 24);
    EXPECT_EQ(s.total_params, 15);
}

TEST(SpotCheck, DepthwiseSame) {
    const auto g = chain({depthwise_node(0, "dw", 2, 3, 1, "same")}, {1, 2, 4, 4});
    const auto s = model_stats(g);
    EXPECT_EQ(s.total_macs, 288);
    EXPECT_EQ(s.total_flops, 576);
}

// The dense layer of the spot-check reads 4 features, so it takes its own
// graph input; the totals are the per-layer sum.
TEST(SpotCheck, ConvAndDenseTotalsAdd) {
    ModelGraph g;
    g.nodes = {conv_node(0, "conv", 2, 3, 1, "same", 3), dense_node(1, "fc", 4, 3)};
    g.inputs = {{0, 0, {1, 3, 8, 8}}, {1, 0, {1, 4}}};
    g.outputs = {0, 1};
    const auto s = model_stats(g);
    EXPECT_EQ(s.total_macs, 3468);
    EXPECT_EQ(s.total_flops, 6936);
}

TEST(SpotCheck, ActivationOnlyGraphHasNoParams) {
    const auto g = chain({simple_node(0, "relu", OpKind::Activation), simple_node(1, "tanh", OpKind::Activation)}, {1, 10});
    const auto s = model_stats(g);
    EXPECT_EQ(s.total_params, 0);
    EXPECT_EQ(s.total_macs, 0);
    EXPECT_EQ(s.total_flops, 20);
}

TEST(Oracle, RandomGraphsMatchLoopNestCounter) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 300; ++i) {
        const auto net = testing::random_net(rng);
        const auto expected = testing::loop_nest_count(net);
        const auto s = model_stats(testing::to_graph(net));
        ASSERT_FALSE(s.incomplete) << testing::describe(net);
        ASSERT_EQ(s.total_macs, expected.macs) << testing::describe(net);
        ASSERT_EQ(s.total_flops, expected.flops) << testing::describe(net);
        ASSERT_EQ(s.total_params, expected.params) << testing::describe(net);
    }
}

TEST(Properties, TotalsAreSumsOfLayers) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const auto s = model_stats(testing::to_graph(testing::random_net(rng)));
        std::int64_t macs = 0, flops = 0, params = 0;
        for (const auto& l : s.per_layer) {
            macs += l.macs;
            flops += l.flops;
            params += l.params;
            if (l.op.kind == OpKind::Conv2d || l.op.kind == OpKind::Dense || l.op.kind == OpKind::DepthwiseConv2d) {
                EXPECT_EQ(l.flops, 2 * l.macs);
            } else {
                EXPECT_EQ(l.macs, 0);
            }
        }
        EXPECT_EQ(macs, s.total_macs);
        EXPECT_EQ(flops, s.total_flops);
        EXPECT_EQ(params, s.total_params);
        std::int64_t counted = 0;
        for (const auto& [c, n] : s.layer_histogram) counted += n;
        EXPECT_EQ(counted, static_cast<std::int64_t>(s.per_layer.size()));
    }
}

TEST(Properties, BatchScalesCostsLinearly) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 50; ++i) {
        auto net = testing::random_net(rng);
        net.batch = 1;
        const auto g = testing::to_graph(net);
        const auto one = model_stats(g);
        auto shape = g.inputs[0].shape;
        shape[0] = 3;
        const auto three = model_stats(g, {shape});
        EXPECT_EQ(three.total_macs, 3 * one.total_macs) << testing::describe(net);
        EXPECT_EQ(three.total_flops, 3 * one.total_flops);
        EXPECT_EQ(three.total_params, one.total_params);
    }
}

TEST(Properties, LayoutDoesNotChangeCosts) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 50; ++i) {
        auto net = testing::random_net(rng);
        net.layout = Layout::Nchw;
        const auto a = model_stats(testing::to_graph(net));
        net.layout = Layout::Nhwc;
        const auto b = model_stats(testing::to_graph(net));
        EXPECT_EQ(a.total_macs, b.total_macs);
        EXPECT_EQ(a.total_flops, b.total_flops);
    }
}

TEST(Shapes, PaddingModes) {
    auto valid = conv_node(0, "c", 1, 3, 2, "valid", 1);
    auto explicit_pad = conv_node(0, "c", 1, 3, 2, "explicit", 1);
    explicit_pad.attrs["pad_top"] = std::int64_t{1};
    explicit_pad.attrs["pad_bottom"] = std::int64_t{1};
    explicit_pad.attrs["pad_left"] = std::int64_t{0};
    explicit_pad.attrs["pad_right"] = std::int64_t{2};
    auto same = conv_node(0, "c", 1, 3, 2, "same", 1);
    const Shape in{1, 1, 7, 8};
    EXPECT_EQ(propagate_shapes(chain({valid}, in)).at(0), (Shape{1, 1, 3, 3}));
    EXPECT_EQ(propagate_shapes(chain({explicit_pad}, in)).at(0), (Shape{1, 1, 4, 4}));
    EXPECT_EQ(propagate_shapes(chain({same}, in)).at(0), (Shape{1, 1, 4, 4}));
}

TEST(Shapes, CaffeCeilModePooling) {
    LayerNode pool{0, "pool", OpType::of(OpKind::Pool), {}, {}};
    pool.attrs = {{"kernel_h", std::int64_t{3}}, {"kernel_w", std::int64_t{3}}, {"stride_h", std::int64_t{2}},
                  {"stride_w", std::int64_t{2}}, {"ceil_mode", std::int64_t{1}}};
    // floor((6-3)/2)+1 = 2; ceil gives 3 and the last window still starts inside.
    EXPECT_EQ(propagate_shapes(chain({pool}, {1, 1, 6, 6})).at(0), (Shape{1, 1, 3, 3}));
    pool.attrs["pad_top"] = std::int64_t{1};
    pool.attrs["pad_bottom"] = std::int64_t{1};
    pool.attrs["pad_left"] = std::int64_t{1};
    pool.attrs["pad_right"] = std::int64_t{1};
    pool.attrs["kernel_h"] = std::int64_t{2};
    pool.attrs["kernel_w"] = std::int64_t{2};
    // span 5 gives 4 windows under ceil, but the fourth would start in the trailing pad.
    EXPECT_EQ(propagate_shapes(chain({pool}, {1, 1, 5, 5})).at(0), (Shape{1, 1, 3, 3}));
}

TEST(Shapes, GlobalPoolAndConcat) {
    LayerNode gp{0, "gp", OpType::of(OpKind::Pool), {{"global", std::int64_t{1}}}, {}};
    EXPECT_EQ(propagate_shapes(chain({gp}, {2, 5, 7, 7})).at(0), (Shape{2, 5, 1, 1}));

    ModelGraph g;
    g.nodes = {simple_node(0, "a", OpKind::Activation), simple_node(1, "b", OpKind::Activation),
               simple_node(2, "cat", OpKind::Concat)};
    g.edges = {{0, 2, 0}, {1, 2, 1}};
    g.inputs = {{0, 0, {1, 2, 4, 4}}, {1, 0, {1, 3, 4, 4}}};
    g.outputs = {2};
    const auto shapes = propagate_shapes(g);
    EXPECT_EQ(shapes.at(2), (Shape{1, 5, 4, 4}));
    EXPECT_EQ(model_stats(g).per_layer.back().flops, 0);
}

TEST(Shapes, MathBroadcasts) {
    ModelGraph g;
    g.nodes = {simple_node(0, "x", OpKind::Activation), simple_node(1, "add", OpKind::Math)};
    g.edges = {{0, 1, 0}};
    g.inputs = {{0, 0, {1, 4, 3, 3}}, {1, 1, {4, 1, 1}}};
    g.outputs = {1};
    EXPECT_EQ(propagate_shapes(g).at(1), (Shape{1, 4, 3, 3}));
    g.inputs[1].shape = {5, 1, 1};
    EXPECT_EQ(code_of([&] { propagate_shapes(g); }), ErrorCode::ShapeMismatch);
}

TEST(Shapes, ReshapeInfersOneDimension) {
    LayerNode r{0, "r", OpType::other("RESHAPE"), {{"shape_rule", std::string("reshape")},
                                                 {"new_shape", std::vector<std::int64_t>{0, -1}}}, {}};
    EXPECT_EQ(propagate_shapes(chain({r}, {2, 3, 4})).at(0), (Shape{2, 12}));
    r.attrs["new_shape"] = std::vector<std::int64_t>{5, -1};
    EXPECT_EQ(code_of([&] { propagate_shapes(chain({r}, {2, 3, 4})); }), ErrorCode::ShapeMismatch);
}

TEST(Errors, MissingAttrAndMismatch) {
    auto conv = conv_node(0, "c", 2, 3, 1, "same", 3);
    conv.attrs.erase("out_channels");
    EXPECT_EQ(code_of([&] { model_stats(chain({conv}, {1, 3, 8, 8})); }), ErrorCode::MissingAttr);

    auto rank2 = conv_node(0, "c", 2, 3, 1, "same", 3);
    EXPECT_EQ(code_of([&] { model_stats(chain({rank2}, {1, 3})); }), ErrorCode::ShapeMismatch);

    auto grouped = conv_node(0, "c", 4, 3, 1, "same", 3, false);
    grouped.attrs["groups"] = std::int64_t{2};
    EXPECT_EQ(code_of([&] { model_stats(chain({grouped}, {1, 3, 8, 8})); }), ErrorCode::ShapeMismatch);

    auto big = conv_node(0, "c", 1, 5, 1, "valid", 1, false);
    EXPECT_EQ(code_of([&] { model_stats(chain({big}, {1, 1, 3, 3})); }), ErrorCode::ShapeMismatch);

    auto fc = dense_node(0, "fc", 5, 2);
    EXPECT_EQ(code_of([&] { model_stats(chain({fc}, {1, 4})); }), ErrorCode::ShapeMismatch);
}

TEST(Incomplete, UnknownShapesAreFlagged) {
    auto other = LayerNode{0, "custom", OpType::other("MYSTERY"), {}, {}};
    const auto g = chain({other, dense_node(1, "fc", 4, 3)}, {1, 4});
    const auto s = model_stats(g);
    EXPECT_TRUE(s.incomplete);
    EXPECT_EQ(s.unknown_nodes, (std::vector<NodeId>{0, 1}));
    EXPECT_EQ(s.total_params, 15);
}

TEST(Incomplete, RnnWithoutGeometry) {
    LayerNode rnn{0, "lstm", OpType::of(OpKind::Rnn), {{"out_shape", std::vector<std::int64_t>{1, 5, 8}}}, {}};
    auto s = model_stats(chain({rnn}, {1, 5, 4}));
    EXPECT_TRUE(s.incomplete);
    rnn.attrs["hidden_size"] = std::int64_t{8};
    rnn.attrs["gates"] = std::int64_t{4};
    s = model_stats(chain({rnn}, {1, 5, 4}));
    EXPECT_FALSE(s.incomplete);
    EXPECT_EQ(s.total_macs, 5 * 4 * 8 * (4 + 8));
}

TEST(Histogram, Categories) {
    EXPECT_EQ(histogram_category(OpKind::Conv2d), "conv");
    EXPECT_EQ(histogram_category(OpKind::DepthwiseConv2d), "depth_conv");
    EXPECT_EQ(histogram_category(OpKind::Quantize), "quant");
    EXPECT_EQ(histogram_category(OpKind::Dequantize), "quant");
    EXPECT_EQ(histogram_category(OpKind::Pool), "other");
}

TEST(Histogram, CorpusFractionsSumToOne) {
    std::mt19937_64 rng(10);
    std::vector<std::pair<ModelStats, std::string>> items;
    for (int i = 0; i < 40; ++i) {
        items.emplace_back(model_stats(testing::to_graph(testing::random_net(rng))),
                           std::string(k_modalities[static_cast<std::size_t>(i % 4)]));
    }
    const auto h = corpus_layer_histogram(items);
    EXPECT_EQ(h.size(), 4u);
    for (const auto& [modality, cats] : h) {
        double sum = 0;
        for (const auto& [c, f] : cats) sum += f;
        EXPECT_NEAR(sum, 1.0, 1e-9) << modality;
    }
    items.emplace_back(ModelStats{}, "video");
    EXPECT_EQ(code_of([&] { corpus_layer_histogram(items); }), ErrorCode::InvalidArgument);
}

}  // namespace
}  // namespace prospector
