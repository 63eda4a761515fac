// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "prospector/digest.hpp"
#include "prospector/native_format.hpp"
#include "support.hpp"

namespace prospector {
namespace {

using testing::chain;
using testing::conv_node;
using testing::dense_node;
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

ModelGraph small_graph() {
    return chain({conv_node(0, "conv", 2, 3, 1, "same", 3), simple_node(1, "relu", OpKind::Activation),
                  dense_node(2, "fc", 128, 4)},
                 {1, 3, 8, 8});
}

TEST(OpKind, NamesRoundTrip) {
    for (int i = 0; i <= static_cast<int>(OpKind::Other); ++i) {
        const auto k = static_cast<OpKind>(i);
        EXPECT_EQ(op_kind_from_string(to_string(k)), k);
    }
    EXPECT_EQ(OpType::of(OpKind::Dense).str(), "dense");
}

TEST(CheckGraph, AcceptsWellFormedGraph) { EXPECT_NO_THROW(check_graph(small_graph())); }

TEST(CheckGraph, RejectsStructuralDefects) {
    auto g = small_graph();
    g.edges.push_back({2, 9, 0});
    EXPECT_EQ(code_of([&] { check_graph(g); }), ErrorCode::MalformedModel);

    g = small_graph();
    std::swap(g.nodes[0], g.nodes[1]);
    EXPECT_EQ(code_of([&] { check_graph(g); }), ErrorCode::MalformedModel);

    g = small_graph();
    g.inputs.clear();
    EXPECT_EQ(code_of([&] { check_graph(g, ErrorCode::SchemaViolation); }), ErrorCode::SchemaViolation);

    g = small_graph();
    g.nodes[2].weights[0].data.pop_back();
    EXPECT_EQ(code_of([&] { check_graph(g); }), ErrorCode::MalformedModel);

    g = small_graph();
    g.nodes[0].attrs.erase("stride_h");
    EXPECT_EQ(code_of([&] { check_graph(g); }), ErrorCode::MalformedModel);
}

TEST(TopologicalOrder, AscendingIdTieBreak) {
    ModelGraph g;
    for (NodeId id : {0, 1, 2, 3}) g.nodes.push_back(simple_node(id, "n", OpKind::Math));
    g.edges = {{3, 1, 0}, {0, 2, 0}, {0, 2, 1}};
    g.inputs = {{0, 0, {1}}, {3, 0, {1}}};
    g.outputs = {1, 2};
    EXPECT_EQ(topological_order(g), (std::vector<NodeId>{0, 2, 3, 1}));
}

TEST(TopologicalOrder, CycleIsDetected) {
    ModelGraph g;
    for (NodeId id : {0, 1, 2}) g.nodes.push_back(simple_node(id, "n", OpKind::Math));
    g.edges = {{0, 1, 0}, {1, 2, 0}, {2, 1, 1}};
    EXPECT_EQ(code_of([&] { topological_order(g); }), ErrorCode::CycleDetected);
}

TEST(NativeFormat, SaveLoadRoundTripsRandomGraphs) {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 50; ++i) {
        const auto net = testing::random_net(rng);
        auto g = testing::to_graph(net, static_cast<std::uint64_t>(i));
        g.model_id = "m" + std::to_string(i);
        g.metadata["source"] = "random";
        g.nodes.back().attrs["scale"] = 0.25;
        g.nodes.back().attrs["axes"] = std::vector<std::int64_t>{1, -1};
        const auto text = save_native(g);
        const auto back = load_native(as_bytes(text));
        ASSERT_EQ(back, g) << testing::describe(net);
        EXPECT_EQ(save_native(back), text);
    }
}

TEST(NativeFormat, OtherOpsKeepTheirTag) {
    auto g = chain({LayerNode{0, "x", OpType::other("CUSTOM_OP"), {}, {}}}, {1, 4});
    g.model_id = "t";
    EXPECT_EQ(load_native(as_bytes(save_native(g))).nodes[0].op, OpType::other("CUSTOM_OP"));
}

TEST(NativeFormat, MissingModelIdIsDocumentHash) {
    const std::string doc = R"({"schema": "prospector.model/1", "framework": "native",
        "nodes": [{"id": 0, "name": "a", "op": "activation"}], "edges": [],
        "inputs": [{"node": 0, "shape": [1, 4]}], "outputs": [0]})";
    EXPECT_EQ(load_native(as_bytes(doc)).model_id, sha256_hex(std::string_view(doc)));
}

TEST(NativeFormat, ExternalWeightFile) {
    testing::TempDir dir;
    const auto payload = testing::f32_bytes({1, 2, 3, 4, 5, 6});
    write_file(dir / "w.bin", ByteView(payload));
    const std::string doc = R"({"schema": "prospector.model/1", "framework": "native", "model_id": "x",
        "nodes": [{"id": 0, "name": "fc", "op": "dense", "attrs": {"units": 2, "in_features": 2},
                   "weights": [{"role": "kernel", "shape": [2, 2], "dtype": "f32", "file": "w.bin", "offset": 8}]}],
        "edges": [], "inputs": [{"node": 0, "shape": [1, 2]}], "outputs": [0]})";
    const auto g = load_native(as_bytes(doc), dir.path());
    const Bytes expected(payload.begin() + 8, payload.end());
    EXPECT_EQ(g.nodes[0].weights[0].data, expected);
    EXPECT_EQ(code_of([&] { load_native(as_bytes(doc)); }), ErrorCode::SchemaViolation);
}

TEST(NativeFormat, ViolationsNameTheJsonPointer) {
    const std::string doc = R"({"schema": "prospector.model/1", "framework": "native",
        "nodes": [{"id": 0, "name": "a", "op": "activation"}], "edges": [{"from": 0, "to": 4}],
        "inputs": [{"node": 0, "shape": [1, 4]}], "outputs": [0]})";
    try {
        load_native(as_bytes(doc));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
        EXPECT_NE(std::string(e.what()).find("/edges/0/to"), std::string::npos) << e.what();
    }
    EXPECT_EQ(code_of([] { load_native(as_bytes(std::string_view("{not json"))); }), ErrorCode::SchemaViolation);
    EXPECT_EQ(code_of([] { load_native(as_bytes(std::string_view(R"({"schema": "other/9"})"))); }),
              ErrorCode::SchemaViolation);
}

TEST(NativeFormat, FixturesLoad) {
    const auto g = load_native(read_file(testing::fixture_dir() / "models" / "finetune_base.json"));
    EXPECT_EQ(g.model_id, "finetune-base");
    EXPECT_EQ(g.nodes.size(), 5u);
    EXPECT_EQ(g.param_count(), 5 * 100);
}

}  // namespace
}  // namespace prospector
