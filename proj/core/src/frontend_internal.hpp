// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "prospector/bytes.hpp"
#include "prospector/ir.hpp"
#include "prospector/tables.hpp"

namespace prospector::detail {

ModelGraph parse_tflite(ByteView data, const OpTable& ops);
ModelGraph parse_caffe(ByteView structure, std::optional<ByteView> weights, const OpTable& ops);
ModelGraph parse_ncnn(ByteView param, std::optional<ByteView> bin, const OpTable& ops);
ModelGraph parse_onnx(ByteView data, const OpTable& ops);

/// Canonical op plus its shape rule recorded as the "shape_rule" attr.
inline LayerNode make_node(NodeId id, std::string name, const OpTable& ops, std::string_view framework,
                           std::string_view source_op) {
    LayerNode n;
    n.id = id;
    n.name = std::move(name);
    std::string rule;
    n.op = ops.canonicalize(framework, source_op, &rule);
    if (!rule.empty()) n.attrs["shape_rule"] = rule;
    return n;
}

inline Bytes f32_bytes(const std::vector<float>& values) {
    Bytes out(values.size() * 4);
    if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
    return out;
}

}  // namespace prospector::detail
