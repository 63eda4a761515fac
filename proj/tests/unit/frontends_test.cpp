// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "prospector/digest.hpp"
#include "prospector/frontends.hpp"
#include "prospector/metrics.hpp"
#include "support.hpp"

namespace prospector {
namespace {

Bytes fixture(const std::string& name) { return read_file(testing::fixture_dir() / "models" / name); }

ModelGraph parse(const std::string& primary, const std::string& framework, const std::string& weights = "") {
    ModelFiles files;
    files.primary = fixture(primary);
    if (!weights.empty()) files.weights = fixture(weights);
    return parse_model(files, framework);
}

std::int64_t count_kind(const ModelGraph& g, OpKind kind) {
    return std::count_if(g.nodes.begin(), g.nodes.end(), [&](const LayerNode& n) { return n.op.kind == kind; });
}

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

TEST(Frontends, SupportedList) {
    for (auto fw : {"tflite", "caffe", "ncnn", "onnx", "native"}) EXPECT_TRUE(has_frontend(fw)) << fw;
    EXPECT_FALSE(has_frontend("mxnet"));
    EXPECT_EQ(code_of([] { parse_model({to_bytes("x"), {}, {}}, "mxnet"); }), ErrorCode::UnsupportedFramework);
}

// Hand-derived costs for the 8x8x3 classifier: conv 3x3x3->4 same, depthwise
// 3x3 same, 2x2 max pool, dense 64->16, dense 16->5. The converter drops the
// all-zero dense biases and shares one zero bias between the two convs.
TEST(TfliteFrontend, ClassifierCosts) {
    const auto g = parse("tiny_classifier.tflite", "tflite");
    EXPECT_EQ(g.framework, "tflite");
    EXPECT_EQ(g.layout, Layout::Nhwc);
    EXPECT_EQ(g.model_id, sha256_hex(fixture("tiny_classifier.tflite")));
    EXPECT_EQ(count_kind(g, OpKind::Conv2d), 1);
    EXPECT_EQ(count_kind(g, OpKind::DepthwiseConv2d), 1);
    EXPECT_EQ(count_kind(g, OpKind::Dense), 2);
    EXPECT_EQ(count_kind(g, OpKind::Pool), 1);
    const auto s = model_stats(g);
    EXPECT_FALSE(s.incomplete);
    EXPECT_EQ(s.total_macs, 8 * 8 * 4 * 27 + 8 * 8 * 4 * 9 + 64 * 16 + 16 * 5);
    EXPECT_EQ(s.total_params, (108 + 4) + (36 + 4) + 64 * 16 + 16 * 5);
}

TEST(TfliteFrontend, Int8ModelHasQuantizationNodes) {
    const auto g = parse("tiny_classifier_int8.tflite", "tflite");
    EXPECT_EQ(count_kind(g, OpKind::Quantize), 1);
    EXPECT_EQ(count_kind(g, OpKind::Dequantize), 1);
    bool int8_kernel = false;
    for (const auto& n : g.nodes) {
        for (const auto& w : n.weights) int8_kernel |= w.role == WeightRole::Kernel && w.dtype == DType::I8;
    }
    EXPECT_TRUE(int8_kernel);
    EXPECT_EQ(model_stats(g).total_macs, model_stats(parse("tiny_classifier.tflite", "tflite")).total_macs);
}

TEST(TfliteFrontend, SensorNetDense) {
    const auto g = parse("sensor_net.tflite", "tflite");
    const auto s = model_stats(g);
    EXPECT_EQ(s.total_macs, 16 * 8 + 8 * 3);
    EXPECT_TRUE(std::any_of(g.nodes.begin(), g.nodes.end(),
                            [](const LayerNode& n) { return n.name.find("cluster_fc") != std::string::npos; }));
}

TEST(TfliteFrontend, TruncatedFileIsMalformed) {
    auto bytes = fixture("tiny_classifier.tflite");
    bytes.resize(64);
    EXPECT_EQ(code_of([&] { parse_model({bytes, {}, {}}, "tflite"); }), ErrorCode::MalformedModel);
}

TEST(TfliteFrontend, RandomTruncationsNeverCrash) {
    const auto full = fixture("tiny_classifier.tflite");
    for (std::size_t len = 0; len < full.size(); len += 97) {
        Bytes part(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(len));
        try {
            parse_model({part, {}, {}}, "tflite");
        } catch (const Error& e) {
            EXPECT_TRUE(e.code() == ErrorCode::MalformedModel || e.code() == ErrorCode::UnsupportedFeature)
                << to_string(e.code());
        }
    }
}

// Input [1,3,8,8] -> conv 2x3x3x3 pad 1 -> relu -> max pool 2/2 -> fc 32->4.
TEST(CaffeFrontend, PrototxtWithCaffemodel) {
    const auto g = parse("tiny.prototxt", "caffe", "tiny.caffemodel");
    EXPECT_EQ(g.layout, Layout::Nchw);
    const auto s = model_stats(g);
    EXPECT_EQ(s.total_macs, 8 * 8 * 2 * 27 + 32 * 4);
    EXPECT_EQ(s.total_params, 54 + 2 + 128 + 4);
    Sha256 h;
    h.update(fixture("tiny.prototxt")).update(fixture("tiny.caffemodel"));
    EXPECT_EQ(g.model_id, h.hex_digest());
}

TEST(CaffeFrontend, StructureOnlyHasNoWeights) {
    const auto g = parse("tiny.prototxt", "caffe");
    EXPECT_EQ(g.param_count(), 0);
    EXPECT_EQ(model_stats(g).total_macs, 8 * 8 * 2 * 27 + 32 * 4);
}

TEST(CaffeFrontend, CaffemodelAloneParses) {
    const auto g = parse("tiny.caffemodel", "caffe");
    EXPECT_EQ(count_kind(g, OpKind::Conv2d), 1);
    EXPECT_EQ(g.param_count(), 54 + 2 + 128 + 4);
}

// Input 3x8x8 -> conv 4x3x3 same -> relu -> depthwise 3x3 -> global avg pool -> fc 4->3.
TEST(NcnnFrontend, ParamWithBin) {
    const auto g = parse("tiny.param", "ncnn", "tiny.bin");
    const auto s = model_stats(g);
    EXPECT_EQ(s.total_macs, 64 * 4 * 27 + 64 * 4 * 9 + 4 * 3);
    EXPECT_EQ(s.total_params, 108 + 4 + 36 + 4 + 12 + 3);
    EXPECT_TRUE(std::any_of(g.nodes.begin(), g.nodes.end(), [](const LayerNode& n) { return n.name == "prune_conv1"; }));
}

TEST(NcnnFrontend, TrailingWeightBytesAreMalformed) {
    ModelFiles files{fixture("tiny.param"), fixture("tiny.bin"), {}};
    files.weights->push_back(0);
    EXPECT_EQ(code_of([&] { parse_model(files, "ncnn"); }), ErrorCode::MalformedModel);
}

TEST(NcnnFrontend, BadMagicIsMalformed) {
    EXPECT_EQ(code_of([] { parse_model({to_bytes("123\n1 1\nInput in 0 1 x\n"), {}, {}}, "ncnn"); }),
              ErrorCode::MalformedModel);
}

// Input 1x1x8x8 -> conv 4x1x3x3 pad 1 -> relu -> max pool 2 -> flatten -> gemm 64->10.
TEST(OnnxFrontend, DigitsModel) {
    const auto g = parse("digits.onnx", "onnx");
    const auto s = model_stats(g);
    EXPECT_FALSE(s.incomplete);
    EXPECT_EQ(s.total_macs, 64 * 4 * 9 + 64 * 10);
    EXPECT_EQ(s.total_params, 36 + 4 + 640 + 10);
}

TEST(NativeFrontend, KeepsDeclaredModelId) {
    const auto g = parse("finetune_tuned.json", "native");
    EXPECT_EQ(g.model_id, "finetune-tuned");
}

}  // namespace
}  // namespace prospector
