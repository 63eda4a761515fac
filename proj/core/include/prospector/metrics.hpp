// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prospector/ir.hpp"

namespace prospector {

/// Output shape per node; nullopt marks a node whose shape could not be
/// derived (missing declared shape, unknown input).
using ShapeMap = std::map<NodeId, std::optional<Shape>>;

/// Propagates shapes in topological order. `input_shapes[i]` overrides the
/// declared shape of `graph.inputs[i]`; pass an empty vector to use the
/// declared shapes. Throws ShapeMismatch or MissingAttr.
ShapeMap propagate_shapes(const ModelGraph& graph, const std::vector<Shape>& input_shapes = {});

/// MACs of one node given its primary input and output shapes. Only conv2d,
/// depthwise_conv2d, dense and rnn carry MACs; FLOPs = 2 x MACs for those.
std::int64_t layer_macs(const LayerNode& node, const Shape& in_shape, const Shape& out_shape,
                        Layout layout = Layout::Nchw);

struct LayerStats {
    NodeId node = 0;
    std::string name;
    OpType op;
    std::int64_t macs = 0;
    std::int64_t flops = 0;
    std::int64_t params = 0;
    std::optional<Shape> out_shape;

    friend bool operator==(const LayerStats&, const LayerStats&) = default;
};

struct ModelStats {
    std::string model_id;
    std::int64_t total_macs = 0;
    std::int64_t total_flops = 0;
    std::int64_t total_params = 0;
    std::vector<LayerStats> per_layer;  // topological order
    std::map<std::string, std::int64_t> layer_histogram;
    /// Set when some node's cost could not be computed; totals are then
    /// lower bounds.
    bool incomplete = false;
    std::vector<NodeId> unknown_nodes;

    friend bool operator==(const ModelStats&, const ModelStats&) = default;
};

ModelStats model_stats(const ModelGraph& graph, const std::vector<Shape>& input_shapes = {});

/// Layer-composition category: conv, depth_conv, dense, activation, math,
/// quant, resize, slice or other.
std::string_view histogram_category(OpKind kind) noexcept;

inline constexpr std::string_view k_modalities[] = {"image", "text", "audio", "sensor"};

/// Per modality, the fraction of nodes in each category. Throws
/// InvalidArgument for labels outside k_modalities.
std::map<std::string, std::map<std::string, double>> corpus_layer_histogram(
    const std::vector<std::pair<ModelStats, std::string>>& stats);

}  // namespace prospector
