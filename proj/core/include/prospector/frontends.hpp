// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "prospector/bytes.hpp"
#include "prospector/ir.hpp"
#include "prospector/tables.hpp"

namespace prospector {

/// Source files of one model. Caffe pairs a prototxt with a caffemodel and
/// ncnn a .param with a .bin; single-file formats leave `weights` empty.
struct ModelFiles {
    Bytes primary;
    std::optional<Bytes> weights;
    /// Directory used to resolve external weight files of native JSON models.
    std::optional<std::filesystem::path> base_dir;
};

/// Frameworks with a parser: tflite, caffe, ncnn, onnx and native.
const std::vector<FrameworkId>& supported_frontends();
bool has_frontend(std::string_view framework) noexcept;

/// Parses a validated model into the unified graph. `model_id` is the SHA-256
/// of the primary bytes followed by the weight bytes. Source ops missing from
/// the op table become other(<source name>).
///
/// Throws UnsupportedFramework, MalformedModel, UnsupportedFeature or
/// CycleDetected.
ModelGraph parse_model(const ModelFiles& files, std::string_view framework,
                       const OpTable& ops = OpTable::builtin());

}  // namespace prospector
