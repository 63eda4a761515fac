// SPDX-License-Identifier: Apache-2.0
#include "prospector/frontends.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "frontend_internal.hpp"
#include "prospector/digest.hpp"
#include "prospector/native_format.hpp"

namespace prospector {

const std::vector<FrameworkId>& supported_frontends() {
    static const std::vector<FrameworkId> ids{"caffe", "native", "ncnn", "onnx", "tflite"};
    return ids;
}

bool has_frontend(std::string_view framework) noexcept {
    const auto& ids = supported_frontends();
    return std::find(ids.begin(), ids.end(), framework) != ids.end();
}

ModelGraph parse_model(const ModelFiles& files, std::string_view framework, const OpTable& ops) {
    if (files.primary.empty()) throw Error(ErrorCode::MalformedModel, "model file is empty");
    std::optional<ByteView> weights;
    if (files.weights) weights = ByteView(*files.weights);

    ModelGraph g;
    if (framework == "tflite") {
        g = detail::parse_tflite(files.primary, ops);
    } else if (framework == "caffe") {
        g = detail::parse_caffe(files.primary, weights, ops);
    } else if (framework == "ncnn") {
        g = detail::parse_ncnn(files.primary, weights, ops);
    } else if (framework == "onnx") {
        g = detail::parse_onnx(files.primary, ops);
    } else if (framework == "native") {
        try {
            g = load_native(files.primary, files.base_dir);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SchemaViolation) throw;
            throw Error(ErrorCode::MalformedModel, e.what());
        }
    } else {
        throw Error(ErrorCode::UnsupportedFramework, fmt::format("no parser for framework '{}'", framework));
    }

    if (framework != "native" || g.model_id.empty()) {
        Sha256 h;
        h.update(files.primary);
        if (weights) h.update(*weights);
        g.model_id = h.hex_digest();
    }
    std::stable_sort(g.nodes.begin(), g.nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    check_graph(g, ErrorCode::MalformedModel);
    topological_order(g);
    return g;
}

}  // namespace prospector
