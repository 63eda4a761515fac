// SPDX-License-Identifier: Apache-2.0
#include "prospector/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

namespace prospector {

namespace {

[[noreturn]] void mismatch(const LayerNode& node, const std::string& detail) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("node {} ('{}'): {}", node.id, node.name, detail));
}

std::int64_t require_int(const LayerNode& node, std::string_view key) {
    auto v = attr_int(node.attrs, key);
    if (!v) throw Error(ErrorCode::MissingAttr, fmt::format("node {} ('{}'): missing attr '{}'", node.id, node.name, key));
    return *v;
}

std::string shape_str(const Shape& s) { return fmt::format("[{}]", fmt::join(s, ",")); }

struct Axes {
    std::size_t c, h, w;
};

Axes axes(Layout layout) { return layout == Layout::Nchw ? Axes{1, 2, 3} : Axes{3, 1, 2}; }

std::int64_t window_out(const LayerNode& node, std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t d,
                        std::int64_t p0, std::int64_t p1, const std::string& padding, bool ceil_mode) {
    if (k < 1 || s < 1 || d < 1) mismatch(node, fmt::format("kernel {} stride {} dilation {} must be >= 1", k, s, d));
    const auto dk = d * (k - 1) + 1;
    if (padding == "same") return (in + s - 1) / s;
    if (padding == "valid") {
        p0 = 0;
        p1 = 0;
    }
    const auto span = in + p0 + p1 - dk;
    if (span < 0) mismatch(node, fmt::format("window {} exceeds padded extent {}", dk, in + p0 + p1));
    auto out = ceil_mode ? (span + s - 1) / s + 1 : span / s + 1;
    // The last window must start inside the input or its leading padding.
    if (ceil_mode && (out - 1) * s >= in + p0) --out;
    return out;
}

Shape window_shape(const LayerNode& node, const Shape& in, Layout layout, std::int64_t channels) {
    if (in.size() != 4) mismatch(node, fmt::format("expects a rank-4 input, got {}", shape_str(in)));
    const auto ax = axes(layout);
    Shape out = in;
    out[ax.c] = channels;
    if (attr_int(node.attrs, "global").value_or(0) != 0) {
        out[ax.h] = 1;
        out[ax.w] = 1;
        return out;
    }
    const auto padding = attr_string(node.attrs, "padding").value_or("explicit");
    const bool ceil_mode = attr_int(node.attrs, "ceil_mode").value_or(0) != 0;
    const auto& a = node.attrs;
    out[ax.h] = window_out(node, in[ax.h], require_int(node, "kernel_h"), require_int(node, "stride_h"),
                           attr_int(a, "dilation_h").value_or(1), attr_int(a, "pad_top").value_or(0),
                           attr_int(a, "pad_bottom").value_or(0), padding, ceil_mode);
    out[ax.w] = window_out(node, in[ax.w], require_int(node, "kernel_w"), require_int(node, "stride_w"),
                           attr_int(a, "dilation_w").value_or(1), attr_int(a, "pad_left").value_or(0),
                           attr_int(a, "pad_right").value_or(0), padding, ceil_mode);
    return out;
}

std::int64_t conv_out_channels(const LayerNode& node, const Shape& in, Layout layout) {
    const auto cin = in[axes(layout).c];
    if (node.op.kind == OpKind::DepthwiseConv2d) {
        if (auto c = attr_int(node.attrs, "out_channels")) return *c;
        return cin * attr_int(node.attrs, "depth_multiplier").value_or(1);
    }
    const auto cout = require_int(node, "out_channels");
    const auto groups = attr_int(node.attrs, "groups").value_or(1);
    if (groups < 1 || cin % groups != 0 || cout % groups != 0) {
        mismatch(node, fmt::format("{} input / {} output channels are not divisible into {} groups", cin, cout, groups));
    }
    return cout;
}

struct DenseGeometry {
    std::int64_t rows = 0;
    std::int64_t in_features = 0;
    Shape out;
};

DenseGeometry dense_geometry(const LayerNode& node, const Shape& in) {
    const auto units = require_int(node, "units");
    if (units < 1) mismatch(node, "units must be >= 1");
    if (in.empty()) mismatch(node, "dense input has rank 0");
    DenseGeometry g;
    const auto total = element_count(in);
    if (auto k = attr_int(node.attrs, "in_features")) {
        if (*k < 1 || total % *k != 0) {
            mismatch(node, fmt::format("input {} does not split into rows of {} features", shape_str(in), *k));
        }
        g.in_features = *k;
        g.rows = total / *k;
        if (attr_int(node.attrs, "keep_dims").value_or(0) != 0) {
            if (in.back() != *k) mismatch(node, fmt::format("last input dim {} != in_features {}", in.back(), *k));
            g.out = in;
            g.out.back() = units;
        } else {
            g.out = {g.rows, units};
        }
        return g;
    }
    auto axis = attr_int(node.attrs, "flatten_axis").value_or(1);
    if (axis < 0) axis += static_cast<std::int64_t>(in.size());
    if (axis < 0 || axis > static_cast<std::int64_t>(in.size())) mismatch(node, "flatten_axis out of range");
    g.in_features = std::accumulate(in.begin() + axis, in.end(), std::int64_t{1}, std::multiplies<>());
    g.rows = total / g.in_features;
    g.out.assign(in.begin(), in.begin() + axis);
    g.out.push_back(units);
    return g;
}

Shape broadcast(const LayerNode& node, const std::vector<Shape>& shapes) {
    Shape out;
    for (const auto& s : shapes) {
        if (s.size() > out.size()) out.insert(out.begin(), s.size() - out.size(), 1);
        for (std::size_t i = 0; i < s.size(); ++i) {
            auto& o = out[out.size() - s.size() + i];
            const auto d = s[i];
            if (o == d || d == 1) continue;
            if (o == 1) {
                o = d;
                continue;
            }
            mismatch(node, fmt::format("cannot broadcast {}", shape_str(s)));
        }
    }
    return out;
}

Shape concat(const LayerNode& node, const std::vector<Shape>& shapes) {
    const auto rank = static_cast<std::int64_t>(shapes.front().size());
    auto axis = attr_int(node.attrs, "axis").value_or(1);
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) mismatch(node, fmt::format("concat axis {} out of range for rank {}", axis, rank));
    Shape out = shapes.front();
    for (std::size_t i = 1; i < shapes.size(); ++i) {
        const auto& s = shapes[i];
        if (static_cast<std::int64_t>(s.size()) != rank) mismatch(node, "concat inputs differ in rank");
        for (std::int64_t d = 0; d < rank; ++d) {
            if (d == axis) continue;
            if (s[d] != out[d]) mismatch(node, fmt::format("concat inputs {} and {} differ off-axis", shape_str(out), shape_str(s)));
        }
        out[axis] += s[axis];
    }
    return out;
}

std::optional<Shape> declared(const LayerNode& node) { return attr_ints(node.attrs, "out_shape"); }

std::optional<Shape> reshape(const LayerNode& node, const Shape& in) {
    auto target = attr_ints(node.attrs, "new_shape");
    if (!target) return declared(node);
    Shape out = *target;
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == 0) {
            if (i >= in.size()) mismatch(node, "reshape copies a dimension beyond the input rank");
            out[i] = in[i];
        }
        if (out[i] == -1) {
            if (infer >= 0) mismatch(node, "reshape has more than one inferred dimension");
            infer = static_cast<int>(i);
            continue;
        }
        if (out[i] < 1) mismatch(node, fmt::format("reshape dimension {}", out[i]));
        known *= out[i];
    }
    const auto total = element_count(in);
    if (infer >= 0) {
        if (total % known != 0) mismatch(node, fmt::format("cannot reshape {} to {}", shape_str(in), shape_str(*target)));
        out[static_cast<std::size_t>(infer)] = total / known;
    } else if (known != total) {
        mismatch(node, fmt::format("cannot reshape {} to {}", shape_str(in), shape_str(*target)));
    }
    return out;
}

Shape flatten(const LayerNode& node, const Shape& in) {
    auto axis = attr_int(node.attrs, "axis").value_or(1);
    if (axis < 0) axis += static_cast<std::int64_t>(in.size());
    if (axis < 0 || axis > static_cast<std::int64_t>(in.size())) mismatch(node, "flatten axis out of range");
    const auto lead = std::accumulate(in.begin(), in.begin() + axis, std::int64_t{1}, std::multiplies<>());
    const auto rest = std::accumulate(in.begin() + axis, in.end(), std::int64_t{1}, std::multiplies<>());
    return {lead, rest};
}

/// Input shapes by slot; nullopt entries are unknown.
using SlotShapes = std::map<std::int32_t, std::optional<Shape>>;

std::optional<Shape> infer(const LayerNode& node, const SlotShapes& ins, Layout layout) {
    const auto rule = attr_string(node.attrs, "shape_rule").value_or("");
    if (rule == "declared") return declared(node);

    std::vector<Shape> known;
    for (const auto& [slot, s] : ins) {
        if (!s) {
            const bool declared_kind = node.op.kind == OpKind::Resize || node.op.kind == OpKind::Slice ||
                                       node.op.kind == OpKind::Rnn || node.op.kind == OpKind::Other;
            return rule.empty() && declared_kind ? declared(node) : std::nullopt;
        }
        known.push_back(*s);
    }
    if (known.empty()) return declared(node);
    const Shape& in = known.front();

    if (rule == "identity") return in;
    if (rule == "flatten") return flatten(node, in);
    if (rule == "reshape") return reshape(node, in);
    if (!rule.empty()) return std::nullopt;

    switch (node.op.kind) {
        case OpKind::Conv2d:
        case OpKind::DepthwiseConv2d:
            if (in.size() != 4) mismatch(node, fmt::format("expects a rank-4 input, got {}", shape_str(in)));
            return window_shape(node, in, layout, conv_out_channels(node, in, layout));
        case OpKind::Pool:
            if (in.size() != 4) mismatch(node, fmt::format("expects a rank-4 input, got {}", shape_str(in)));
            return window_shape(node, in, layout, in[axes(layout).c]);
        case OpKind::Dense: return dense_geometry(node, in).out;
        case OpKind::Activation:
        case OpKind::Quantize:
        case OpKind::Dequantize: return in;
        case OpKind::Math: return broadcast(node, known);
        case OpKind::Concat: return concat(node, known);
        case OpKind::Resize:
        case OpKind::Slice:
        case OpKind::Rnn:
        case OpKind::Other: return declared(node);
    }
    return std::nullopt;
}

SlotShapes node_inputs(const ModelGraph& g, const LayerNode& node, const ShapeMap& shapes,
                       const std::vector<Shape>& overrides) {
    SlotShapes ins;
    for (const auto& e : g.edges) {
        if (e.to != node.id) continue;
        auto it = shapes.find(e.from);
        ins[e.slot] = it == shapes.end() ? std::nullopt : it->second;
    }
    for (std::size_t i = 0; i < g.inputs.size(); ++i) {
        const auto& gi = g.inputs[i];
        if (gi.node != node.id) continue;
        const Shape& s = overrides.empty() ? gi.shape : overrides[i];
        ins[gi.slot] = s.empty() ? std::nullopt : std::optional<Shape>(s);
    }
    return ins;
}

std::int64_t rnn_macs(const LayerNode& node, const Shape& in) {
    const auto hidden = attr_int(node.attrs, "hidden_size");
    const auto gates = attr_int(node.attrs, "gates");
    if (!hidden || !gates || in.size() != 3) return -1;
    const bool time_major = attr_int(node.attrs, "time_major").value_or(0) != 0;
    const auto steps = time_major ? in[0] : in[1];
    const auto batch = time_major ? in[1] : in[0];
    const auto features = in[2];
    const auto dirs = attr_int(node.attrs, "directions").value_or(1);
    return dirs * steps * batch * *gates * *hidden * (features + *hidden);
}

}  // namespace

std::int64_t layer_macs(const LayerNode& node, const Shape& in_shape, const Shape& out_shape, Layout layout) {
    const auto ax = axes(layout);
    switch (node.op.kind) {
        case OpKind::Conv2d: {
            if (in_shape.size() != 4 || out_shape.size() != 4) mismatch(node, "conv2d needs rank-4 shapes");
            const auto groups = attr_int(node.attrs, "groups").value_or(1);
            const auto kh = require_int(node, "kernel_h");
            const auto kw = require_int(node, "kernel_w");
            return out_shape[0] * out_shape[ax.h] * out_shape[ax.w] * out_shape[ax.c] * kh * kw *
                   (in_shape[ax.c] / groups);
        }
        case OpKind::DepthwiseConv2d: {
            if (in_shape.size() != 4 || out_shape.size() != 4) mismatch(node, "depthwise_conv2d needs rank-4 shapes");
            const auto kh = require_int(node, "kernel_h");
            const auto kw = require_int(node, "kernel_w");
            return out_shape[0] * out_shape[ax.h] * out_shape[ax.w] * out_shape[ax.c] * kh * kw;
        }
        case OpKind::Dense: {
            const auto g = dense_geometry(node, in_shape);
            return g.rows * g.in_features * require_int(node, "units");
        }
        case OpKind::Rnn: return std::max<std::int64_t>(rnn_macs(node, in_shape), 0);
        default: return 0;
    }
}

ShapeMap propagate_shapes(const ModelGraph& graph, const std::vector<Shape>& input_shapes) {
    if (!input_shapes.empty()) {
        if (input_shapes.size() != graph.inputs.size()) {
            throw Error(ErrorCode::ShapeMismatch, fmt::format("{} input shapes given for {} graph inputs",
                                                              input_shapes.size(), graph.inputs.size()));
        }
        for (std::size_t i = 0; i < input_shapes.size(); ++i) {
            const auto& declared_shape = graph.inputs[i].shape;
            if (!declared_shape.empty() && declared_shape.size() != input_shapes[i].size()) {
                throw Error(ErrorCode::ShapeMismatch,
                            fmt::format("input {} has rank {}, graph declares {}", i, input_shapes[i].size(), declared_shape.size()));
            }
        }
    }
    ShapeMap shapes;
    for (NodeId id : topological_order(graph)) {
        const auto& node = *graph.find_node(id);
        shapes[id] = infer(node, node_inputs(graph, node, shapes, input_shapes), graph.layout);
    }
    return shapes;
}

std::string_view histogram_category(OpKind kind) noexcept {
    switch (kind) {
        case OpKind::Conv2d: return "conv";
        case OpKind::DepthwiseConv2d: return "depth_conv";
        case OpKind::Dense: return "dense";
        case OpKind::Activation: return "activation";
        case OpKind::Math: return "math";
        case OpKind::Quantize:
        case OpKind::Dequantize: return "quant";
        case OpKind::Resize: return "resize";
        case OpKind::Slice: return "slice";
        case OpKind::Pool:
        case OpKind::Concat:
        case OpKind::Rnn:
        case OpKind::Other: return "other";
    }
    return "other";
}

ModelStats model_stats(const ModelGraph& graph, const std::vector<Shape>& input_shapes) {
    const auto shapes = propagate_shapes(graph, input_shapes);
    ModelStats stats;
    stats.model_id = graph.model_id;
    for (NodeId id : topological_order(graph)) {
        const auto& node = *graph.find_node(id);
        LayerStats ls;
        ls.node = id;
        ls.name = node.name;
        ls.op = node.op;
        ls.params = node.param_count();
        ls.out_shape = shapes.at(id);

        bool known = ls.out_shape.has_value();
        const auto kind = node.op.kind;
        if (kind == OpKind::Conv2d || kind == OpKind::DepthwiseConv2d || kind == OpKind::Dense || kind == OpKind::Rnn) {
            const auto ins = node_inputs(graph, node, shapes, input_shapes);
            const std::optional<Shape> in = ins.empty() ? std::nullopt : ins.begin()->second;
            if (kind == OpKind::Rnn) {
                known = in && rnn_macs(node, *in) >= 0;
            } else {
                known = known && in.has_value();
            }
            if (known) {
                ls.macs = layer_macs(node, *in, ls.out_shape.value_or(Shape{}), graph.layout);
                ls.flops = 2 * ls.macs;
            }
        } else if (kind == OpKind::Activation || kind == OpKind::Math || kind == OpKind::Pool ||
                   kind == OpKind::Quantize || kind == OpKind::Dequantize || kind == OpKind::Resize) {
            if (ls.out_shape) ls.flops = element_count(*ls.out_shape);
        }
        if (!known) {
            stats.incomplete = true;
            stats.unknown_nodes.push_back(id);
        }
        stats.total_macs += ls.macs;
        stats.total_flops += ls.flops;
        stats.total_params += ls.params;
        ++stats.layer_histogram[std::string(histogram_category(kind))];
        stats.per_layer.push_back(std::move(ls));
    }
    return stats;
}

std::map<std::string, std::map<std::string, double>> corpus_layer_histogram(
    const std::vector<std::pair<ModelStats, std::string>>& stats) {
    std::map<std::string, std::map<std::string, std::int64_t>> counts;
    for (const auto& [s, modality] : stats) {
        if (std::find(std::begin(k_modalities), std::end(k_modalities), modality) == std::end(k_modalities)) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("unknown modality '{}'", modality));
        }
        for (const auto& [category, n] : s.layer_histogram) counts[modality][category] += n;
    }
    std::map<std::string, std::map<std::string, double>> out;
    for (const auto& [modality, cats] : counts) {
        std::int64_t total = 0;
        for (const auto& [c, n] : cats) total += n;
        if (total == 0) continue;
        for (const auto& [c, n] : cats) out[modality][c] = static_cast<double>(n) / static_cast<double>(total);
    }
    return out;
}

}  // namespace prospector
