// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prospector/bytes.hpp"
#include "prospector/tables.hpp"

namespace prospector {

/// One protobuf wire-format field. `payload` holds the length-delimited body
/// or the 4/8 raw bytes of a fixed field; `varint` holds varint values.
struct WireField {
    std::uint32_t number = 0;
    WireType type = WireType::Varint;
    std::uint64_t varint = 0;
    ByteView payload;
};

/// Streams top-level fields of a serialized message. Throws `on_error` on
/// truncated varints, out-of-bounds lengths, field number 0, or group wire
/// types.
class WireReader {
public:
    WireReader(ByteView data, ErrorCode on_error) : reader_(data, on_error), code_(on_error) {}
    bool next(WireField& field);

private:
    ByteReader reader_;
    ErrorCode code_;
};

std::uint64_t read_varint(ByteReader& r);

/// True when `data` parses completely as a sequence of well-formed fields
/// that agree with the probe's expected wire types and required fields.
bool protobuf_probe(ByteView data, const StructuredProbe& probe);

/// Field addressed by its text-format name and its wire number, so one
/// reader serves both prototxt and binary encodings.
struct FieldKey {
    std::string_view name;
    std::uint32_t number;
};

/// Read-only view over a protobuf message decoded either from text format or
/// from wire format. Binary views borrow the buffer they were parsed from.
class ProtoNode {
public:
    /// Throws MalformedModel on syntax errors.
    static ProtoNode parse_text(std::string_view text);
    static ProtoNode parse_binary(ByteView data);

    bool is_binary() const noexcept { return text_ == nullptr; }
    bool has(FieldKey key) const;

    std::vector<ProtoNode> messages(FieldKey key) const;
    std::vector<std::string> strings(FieldKey key) const;
    std::vector<std::int64_t> ints(FieldKey key) const;
    std::vector<double> reals(FieldKey key) const;

    std::optional<ProtoNode> message(FieldKey key) const;
    std::optional<std::string> string(FieldKey key) const;
    std::optional<std::int64_t> int_value(FieldKey key) const;
    std::optional<double> real(FieldKey key) const;

    /// Repeated float field as little-endian f32 bytes: the exact payload for
    /// binary input, re-encoded values for text input.
    Bytes float_bytes(FieldKey key) const;

    struct TextMessage;

private:
    std::shared_ptr<const TextMessage> root_;
    const TextMessage* text_ = nullptr;
    ByteView binary_;
};

}  // namespace prospector
