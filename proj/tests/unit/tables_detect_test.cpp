// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "prospector/bytes.hpp"
#include "prospector/detect.hpp"
#include "prospector/tables.hpp"
#include "support.hpp"

namespace prospector {
namespace {

Bytes fixture(const std::string& name) { return read_file(testing::fixture_dir() / "models" / name); }

TEST(FormatTable, BuiltinCoversSurveyFrameworks) {
    const auto& t = FormatTable::builtin();
    for (auto id : {"tflite", "caffe", "ncnn", "onnx", "tf", "pytorch", "keras", "snpe", "native"}) {
        EXPECT_NE(t.find(id), nullptr) << id;
    }
    EXPECT_EQ(t.find("nope"), nullptr);
    EXPECT_FALSE(t.all_rules().empty());
    EXPECT_EQ(t.all_rules().size(), builtin_rules().size());
}

TEST(FormatTable, MalformedJsonIsConfigError) {
    try {
        FormatTable::from_json("{\"frameworks\": 3}");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
}

TEST(OpTable, CanonicalizesKnownAndUnknownOps) {
    const auto& ops = OpTable::builtin();
    EXPECT_EQ(ops.canonicalize("tflite", "CONV_2D").kind, OpKind::Conv2d);
    EXPECT_EQ(ops.canonicalize("tflite", "DEPTHWISE_CONV_2D").kind, OpKind::DepthwiseConv2d);
    EXPECT_EQ(ops.canonicalize("caffe", "InnerProduct").kind, OpKind::Dense);
    EXPECT_EQ(ops.canonicalize("onnx", "Relu").kind, OpKind::Activation);
    const auto other = ops.canonicalize("tflite", "MADE_UP_OP");
    EXPECT_EQ(other.kind, OpKind::Other);
    EXPECT_EQ(other.tag, "MADE_UP_OP");
    EXPECT_EQ(other.str(), "other(MADE_UP_OP)");
}

TEST(NativeLibTable, LongestPrefixWins) {
    const auto& t = NativeLibTable::builtin();
    EXPECT_EQ(t.match("libtensorflowlite_jni.so"), "tflite");
    EXPECT_EQ(t.match("libncnn.so"), "ncnn");
    EXPECT_FALSE(t.match("libc++_shared.so").has_value());
}

TEST(ApiPatternTable, HasThreeVendors) {
    const auto& p = ApiPatternTable::builtin().patterns();
    EXPECT_EQ(p.size(), 3u);
    for (const auto& [vendor, pats] : p) EXPECT_FALSE(pats.empty()) << to_string(vendor);
}

struct GenuineCase {
    const char* file;
    const char* framework;
};

class GenuineFixture : public ::testing::TestWithParam<GenuineCase> {};

TEST_P(GenuineFixture, Validates) {
    const auto& c = GetParam();
    const auto r = validate(fixture(c.file), c.framework);
    EXPECT_EQ(r.verdict, Verdict::Valid) << c.file;
    EXPECT_TRUE(r.rule_fired.has_value());
}

INSTANTIATE_TEST_SUITE_P(Fixtures, GenuineFixture,
                         ::testing::Values(GenuineCase{"tiny_classifier.tflite", "tflite"},
                                           GenuineCase{"tiny_classifier_int8.tflite", "tflite"},
                                           GenuineCase{"sensor_net.tflite", "tflite"},
                                           GenuineCase{"tiny.prototxt", "caffe"},
                                           GenuineCase{"tiny.caffemodel", "caffe"},
                                           GenuineCase{"tiny.param", "ncnn"},
                                           GenuineCase{"digits.onnx", "onnx"},
                                           GenuineCase{"finetune_base.json", "native"}));

TEST(Validate, WrongFrameworkIsInvalid) {
    EXPECT_EQ(validate(fixture("tiny_classifier.tflite"), "caffe").verdict, Verdict::Invalid);
    EXPECT_EQ(validate(fixture("tiny.param"), "tflite").verdict, Verdict::Invalid);
    EXPECT_EQ(validate(to_bytes("layer { }"), "caffe").verdict, Verdict::Invalid);
}

TEST(Validate, FrameworkWithoutRulesIsUnknown) {
    const auto r = validate(to_bytes("anything"), "mxnet");
    EXPECT_EQ(r.verdict, Verdict::Unknown);
    EXPECT_FALSE(r.rule_fired.has_value());
}

TEST(Validate, TruncatedTfliteHeaderIsInvalid) {
    auto bytes = fixture("tiny_classifier.tflite");
    bytes.resize(6);
    EXPECT_EQ(validate(bytes, "tflite").verdict, Verdict::Invalid);
}

TEST(Validate, RandomBytesRarelyPassTflite) {
    std::mt19937_64 rng(11);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
        Bytes b(16 + rng() % 256);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        if (validate(b, "tflite").verdict == Verdict::Valid) ++hits;
    }
    EXPECT_LT(hits, 10);
}

TEST(Validate, RandomBytesRarelyPassProtobufProbes) {
    std::mt19937_64 rng(12);
    int hits = 0;
    for (int i = 0; i < 2000; ++i) {
        Bytes b(8 + rng() % 128);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        if (validate(b, "onnx").verdict == Verdict::Valid) ++hits;
        if (validate(b, "caffe").verdict == Verdict::Valid) ++hits;
    }
    EXPECT_LT(hits, 4);
}

TEST(Validate, SnpeZipMemberProbe) {
    const auto with = testing::make_zip({{"model", to_bytes("x"), false}});
    const auto without = testing::make_zip({{"other", to_bytes("x"), false}});
    EXPECT_EQ(validate(with, "snpe").verdict, Verdict::Valid);
    EXPECT_EQ(validate(without, "snpe").verdict, Verdict::Invalid);
}

TEST(Validate, CandidateCarriesIdentity) {
    ModelCandidate c{"pkg", "assets/m.tflite", "tflite", ".tflite"};
    const auto r = validate_candidate(c, fixture("tiny_classifier.tflite"));
    EXPECT_EQ(r.candidate, c);
    EXPECT_EQ(r.verdict, Verdict::Valid);
    EXPECT_EQ(r.rule_fired, "tflite.flatbuffer_identifier");
}

}  // namespace
}  // namespace prospector
