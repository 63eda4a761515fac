// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "prospector/protowire.hpp"

namespace prospector {
namespace {

void varint(Bytes& out, std::uint64_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<std::uint8_t>(v | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(v));
}

void key(Bytes& out, std::uint32_t field, WireType type) { varint(out, (std::uint64_t{field} << 3) | static_cast<std::uint8_t>(type)); }

void len_field(Bytes& out, std::uint32_t field, const Bytes& body) {
    key(out, field, WireType::Len);
    varint(out, body.size());
    out.insert(out.end(), body.begin(), body.end());
}

void str_field(Bytes& out, std::uint32_t field, std::string_view s) { len_field(out, field, to_bytes(s)); }

void int_field(Bytes& out, std::uint32_t field, std::uint64_t v) {
    key(out, field, WireType::Varint);
    varint(out, v);
}

Bytes sample_net() {
    Bytes conv_param;
    int_field(conv_param, 1, 2);
    Bytes layer;
    str_field(layer, 1, "conv1");
    str_field(layer, 2, "Convolution");
    len_field(layer, 106, conv_param);
    Bytes net;
    str_field(net, 1, "tiny");
    len_field(net, 100, layer);
    len_field(net, 100, layer);
    return net;
}

TEST(WireReader, StreamsTopLevelFields) {
    const auto net = sample_net();
    WireReader r(net, ErrorCode::MalformedModel);
    WireField f;
    std::vector<std::uint32_t> numbers;
    while (r.next(f)) numbers.push_back(f.number);
    EXPECT_EQ(numbers, (std::vector<std::uint32_t>{1, 100, 100}));
}

TEST(WireReader, FixedFieldsExposePayload) {
    Bytes b;
    key(b, 3, WireType::Fixed32);
    for (std::uint8_t x : {1, 2, 3, 4}) b.push_back(x);
    key(b, 4, WireType::Fixed64);
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(i));
    WireReader r(b, ErrorCode::MalformedModel);
    WireField f;
    ASSERT_TRUE(r.next(f));
    EXPECT_EQ(f.type, WireType::Fixed32);
    EXPECT_EQ(f.payload.size(), 4u);
    ASSERT_TRUE(r.next(f));
    EXPECT_EQ(f.payload.size(), 8u);
    EXPECT_FALSE(r.next(f));
}

ErrorCode read_all(const Bytes& b) {
    try {
        WireReader r(b, ErrorCode::MalformedModel);
        WireField f;
        while (r.next(f)) {
        }
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Config;  // sentinel: no error
}

TEST(WireReader, RejectsMalformedStreams) {
    EXPECT_EQ(read_all({0x0A, 0x05, 'a'}), ErrorCode::MalformedModel);  // length past end
    EXPECT_EQ(read_all({0x08, 0x80}), ErrorCode::MalformedModel);       // truncated varint
    EXPECT_EQ(read_all({0x00, 0x01}), ErrorCode::MalformedModel);       // field 0
    EXPECT_EQ(read_all({0x0B}), ErrorCode::MalformedModel);             // start group
    EXPECT_EQ(read_all({}), ErrorCode::Config);
}

TEST(ProtobufProbe, RequiresDeclaredFields) {
    StructuredProbe p;
    p.probe = "protobuf";
    p.fields = {{1, WireType::Len}, {100, WireType::Len}};
    p.require = {100};
    p.allow_unknown = false;
    EXPECT_TRUE(protobuf_probe(sample_net(), p));

    Bytes only_name;
    str_field(only_name, 1, "x");
    EXPECT_FALSE(protobuf_probe(only_name, p));

    Bytes wrong_type = sample_net();
    int_field(wrong_type, 100, 3);
    EXPECT_FALSE(protobuf_probe(wrong_type, p));

    Bytes unknown = sample_net();
    int_field(unknown, 7, 1);
    EXPECT_FALSE(protobuf_probe(unknown, p));
    p.allow_unknown = true;
    EXPECT_TRUE(protobuf_probe(unknown, p));
}

TEST(ProtobufProbe, RequireAnyNeedsOne) {
    StructuredProbe p;
    p.probe = "protobuf";
    p.fields = {{1, WireType::Len}, {2, WireType::Len}, {100, WireType::Len}};
    p.require_any = {2, 100};
    EXPECT_TRUE(protobuf_probe(sample_net(), p));
    Bytes only_name;
    str_field(only_name, 1, "x");
    EXPECT_FALSE(protobuf_probe(only_name, p));
}

TEST(ProtobufProbe, RandomBytesAlmostNeverPass) {
    StructuredProbe p;
    p.probe = "protobuf";
    p.fields = {{1, WireType::Len}, {100, WireType::Len}};
    p.require = {100};
    p.allow_unknown = false;
    std::mt19937_64 rng(5);
    int hits = 0;
    for (int i = 0; i < 5000; ++i) {
        Bytes b(4 + rng() % 64);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        hits += protobuf_probe(b, p) ? 1 : 0;
    }
    EXPECT_LT(hits, 3);
}

constexpr FieldKey k_name{"name", 1};
constexpr FieldKey k_type{"type", 2};
constexpr FieldKey k_layer{"layer", 100};
constexpr FieldKey k_conv{"convolution_param", 106};
constexpr FieldKey k_num_output{"num_output", 1};

TEST(ProtoNode, TextAndBinaryAgree) {
    const auto text = ProtoNode::parse_text(R"(
        # comment
        name: "tiny"
        layer { name: "conv1" type: "Convolution" convolution_param { num_output: 2 } }
        layer {
          name: 'conv1'
          type: "Convolution"
          convolution_param: { num_output: 2 }
        }
    )");
    const auto net = sample_net();
    const auto bin = ProtoNode::parse_binary(net);
    EXPECT_FALSE(text.is_binary());
    EXPECT_TRUE(bin.is_binary());
    for (const auto* node : {&text, &bin}) {
        EXPECT_EQ(node->string(k_name), "tiny");
        const auto layers = node->messages(k_layer);
        ASSERT_EQ(layers.size(), 2u);
        for (const auto& l : layers) {
            EXPECT_EQ(l.string(k_name), "conv1");
            EXPECT_EQ(l.string(k_type), "Convolution");
            ASSERT_TRUE(l.message(k_conv).has_value());
            EXPECT_EQ(l.message(k_conv)->int_value(k_num_output), 2);
        }
        EXPECT_FALSE(node->has(k_type));
    }
}

TEST(ProtoNode, RepeatedFloatsBinaryIsExactPayload) {
    Bytes packed;
    for (float v : {1.5f, -2.0f}) {
        std::uint8_t raw[4];
        std::memcpy(raw, &v, 4);
        packed.insert(packed.end(), raw, raw + 4);
    }
    Bytes blob;
    len_field(blob, 5, packed);
    const auto bin = ProtoNode::parse_binary(blob);
    EXPECT_EQ(bin.float_bytes({"data", 5}), packed);
    const auto text = ProtoNode::parse_text("data: 1.5 data: -2");
    EXPECT_EQ(text.float_bytes({"data", 5}), packed);
    EXPECT_EQ(text.reals({"data", 5}), (std::vector<double>{1.5, -2.0}));
}

TEST(ProtoNode, TextSyntaxErrorIsMalformed) {
    try {
        ProtoNode::parse_text("layer { name: ");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MalformedModel);
    }
}

}  // namespace
}  // namespace prospector
