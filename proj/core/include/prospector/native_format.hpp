// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "prospector/bytes.hpp"
#include "prospector/ir.hpp"

namespace prospector {

inline constexpr std::string_view k_native_schema = "prospector.model/1";

/// Loads the native JSON model format:
///
///   {"schema": "prospector.model/1", "model_id"?: str, "framework": str,
///    "layout"?: "nchw"|"nhwc", "metadata"?: {str: str},
///    "nodes": [{"id", "name", "op", "tag"?, "attrs"?, "weights"?: [
///        {"role", "shape", "dtype", "data": base64 | "file": path, "offset"?}]}],
///    "edges": [{"from", "to", "slot"?}],
///    "inputs": [{"node", "slot"?, "shape"}], "outputs": [id, ...]}
///
/// Weight "file" paths resolve against `base_dir`. When "model_id" is absent
/// it is the SHA-256 of the document bytes. Throws SchemaViolation naming the
/// JSON pointer of the offending field.
ModelGraph load_native(ByteView json_bytes,
                       const std::optional<std::filesystem::path>& base_dir = std::nullopt);

/// Canonical form: sorted keys, two-space indent, inline base64 weights,
/// nodes ordered by id. load_native(save_native(g)) == g.
std::string save_native(const ModelGraph& graph);

}  // namespace prospector
