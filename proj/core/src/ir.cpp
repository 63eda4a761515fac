// SPDX-License-Identifier: Apache-2.0
#include "prospector/ir.hpp"

#include <algorithm>
#include <array>
#include <queue>
#include <set>
#include <unordered_map>
#include <utility>

#include <fmt/format.h>

namespace prospector {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 13> k_op_names{{
    {OpKind::Conv2d, "conv2d"},
    {OpKind::DepthwiseConv2d, "depthwise_conv2d"},
    {OpKind::Dense, "dense"},
    {OpKind::Activation, "activation"},
    {OpKind::Pool, "pool"},
    {OpKind::Math, "math"},
    {OpKind::Quantize, "quantize"},
    {OpKind::Dequantize, "dequantize"},
    {OpKind::Resize, "resize"},
    {OpKind::Slice, "slice"},
    {OpKind::Concat, "concat"},
    {OpKind::Rnn, "rnn"},
    {OpKind::Other, "other"},
}};

constexpr std::array<std::pair<DType, std::string_view>, 6> k_dtype_names{{
    {DType::F32, "f32"},
    {DType::F16, "f16"},
    {DType::I8, "i8"},
    {DType::U8, "u8"},
    {DType::I32, "i32"},
    {DType::Other, "other"},
}};

constexpr std::array<std::pair<WeightRole, std::string_view>, 3> k_role_names{{
    {WeightRole::Kernel, "kernel"},
    {WeightRole::Bias, "bias"},
    {WeightRole::Other, "other"},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table,
                         Enum value) noexcept {
    for (const auto& [e, name] : table) {
        if (e == value) return name;
    }
    return "?";
}

template <typename Enum, std::size_t N>
std::optional<Enum> value_of(const std::array<std::pair<Enum, std::string_view>, N>& table,
                             std::string_view text) noexcept {
    for (const auto& [e, name] : table) {
        if (name == text) return e;
    }
    return std::nullopt;
}

template <typename T>
std::optional<T> get_as(const Attrs& attrs, std::string_view key) {
    auto it = attrs.find(key);
    if (it == attrs.end()) return std::nullopt;
    if (const auto* v = std::get_if<T>(&it->second)) return *v;
    return std::nullopt;
}

}  // namespace

std::string_view to_string(OpKind kind) noexcept { return name_of(k_op_names, kind); }

std::optional<OpKind> op_kind_from_string(std::string_view text) noexcept {
    return value_of(k_op_names, text);
}

std::string OpType::str() const {
    if (kind == OpKind::Other) {
        return fmt::format("other({})", tag);
    }
    return std::string(to_string(kind));
}

std::string_view to_string(WeightRole role) noexcept { return name_of(k_role_names, role); }
std::string_view to_string(DType dtype) noexcept { return name_of(k_dtype_names, dtype); }

std::optional<WeightRole> weight_role_from_string(std::string_view text) noexcept {
    return value_of(k_role_names, text);
}

std::optional<DType> dtype_from_string(std::string_view text) noexcept {
    return value_of(k_dtype_names, text);
}

std::string_view to_string(Layout layout) noexcept {
    return layout == Layout::Nchw ? "nchw" : "nhwc";
}

std::size_t dtype_size(DType dtype) noexcept {
    switch (dtype) {
        case DType::F32: return 4;
        case DType::F16: return 2;
        case DType::I8: return 1;
        case DType::U8: return 1;
        case DType::I32: return 4;
        case DType::Other: return 0;
    }
    return 0;
}

bool is_integer(DType dtype) noexcept {
    return dtype == DType::I8 || dtype == DType::U8 || dtype == DType::I32;
}

std::int64_t element_count(const Shape& shape) noexcept {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::optional<std::int64_t> attr_int(const Attrs& attrs, std::string_view key) {
    return get_as<std::int64_t>(attrs, key);
}

std::optional<double> attr_double(const Attrs& attrs, std::string_view key) {
    if (auto d = get_as<double>(attrs, key)) return d;
    if (auto i = get_as<std::int64_t>(attrs, key)) return static_cast<double>(*i);
    return std::nullopt;
}

std::optional<std::string> attr_string(const Attrs& attrs, std::string_view key) {
    return get_as<std::string>(attrs, key);
}

std::optional<std::vector<std::int64_t>> attr_ints(const Attrs& attrs, std::string_view key) {
    return get_as<std::vector<std::int64_t>>(attrs, key);
}

std::int64_t LayerNode::param_count() const noexcept {
    std::int64_t n = 0;
    for (const auto& w : weights) n += w.param_count();
    return n;
}

const LayerNode* ModelGraph::find_node(NodeId id) const noexcept {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const LayerNode& n, NodeId v) { return n.id < v; });
    if (it != nodes.end() && it->id == id) return &*it;
    return nullptr;
}

std::int64_t ModelGraph::param_count() const noexcept {
    std::int64_t n = 0;
    for (const auto& node : nodes) n += node.param_count();
    return n;
}

void check_graph(const ModelGraph& graph, ErrorCode code) {
    auto fail = [code](const std::string& msg) { throw Error(code, msg); };

    for (std::size_t i = 1; i < graph.nodes.size(); ++i) {
        if (graph.nodes[i - 1].id >= graph.nodes[i].id) {
            fail(fmt::format("node ids must be unique and sorted (id {} after {})",
                             graph.nodes[i].id, graph.nodes[i - 1].id));
        }
    }
    if (graph.inputs.empty()) fail("graph declares no inputs");
    if (graph.outputs.empty()) fail("graph declares no outputs");

    for (const auto& e : graph.edges) {
        if (!graph.find_node(e.from) || !graph.find_node(e.to)) {
            fail(fmt::format("edge {}->{} references a missing node", e.from, e.to));
        }
        if (e.slot < 0) fail(fmt::format("edge {}->{} has negative slot", e.from, e.to));
    }
    for (const auto& in : graph.inputs) {
        if (!graph.find_node(in.node)) {
            fail(fmt::format("input references missing node {}", in.node));
        }
        for (auto d : in.shape) {
            if (d < 1) fail(fmt::format("input of node {} has dimension {}", in.node, d));
        }
    }
    for (auto out : graph.outputs) {
        if (!graph.find_node(out)) fail(fmt::format("output references missing node {}", out));
    }
    for (const auto& node : graph.nodes) {
        if (node.op.kind == OpKind::Conv2d || node.op.kind == OpKind::DepthwiseConv2d) {
            for (auto key : {"kernel_h", "kernel_w", "stride_h", "stride_w"}) {
                if (!attr_int(node.attrs, key)) {
                    fail(fmt::format("{} node {} lacks attr '{}'", node.op.str(), node.id, key));
                }
            }
        }
        for (const auto& w : node.weights) {
            for (auto d : w.shape) {
                if (d < 1) fail(fmt::format("weight of node {} has dimension {}", node.id, d));
            }
            const auto width = dtype_size(w.dtype);
            const auto count = static_cast<std::size_t>(w.param_count());
            const bool ok = width != 0 ? w.data.size() == count * width
                                       : (count != 0 && w.data.size() % count == 0);
            if (!ok) {
                fail(fmt::format("weight of node {} has {} bytes for shape of {} {} elements",
                                 node.id, w.data.size(), count, to_string(w.dtype)));
            }
        }
    }
}

std::vector<NodeId> topological_order(const ModelGraph& graph) {
    std::unordered_map<NodeId, std::size_t> indegree;
    std::unordered_map<NodeId, std::vector<NodeId>> successors;
    for (const auto& node : graph.nodes) indegree.emplace(node.id, 0);

    // Parallel edges between the same pair count once.
    std::set<std::pair<NodeId, NodeId>> seen;
    for (const auto& e : graph.edges) {
        if (!seen.emplace(e.from, e.to).second) continue;
        successors[e.from].push_back(e.to);
        ++indegree[e.to];
    }

    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (const auto& [id, deg] : indegree) {
        if (deg == 0) ready.push(id);
    }

    std::vector<NodeId> order;
    order.reserve(graph.nodes.size());
    while (!ready.empty()) {
        const NodeId id = ready.top();
        ready.pop();
        order.push_back(id);
        for (NodeId next : successors[id]) {
            if (--indegree[next] == 0) ready.push(next);
        }
    }
    if (order.size() != indegree.size()) {
        throw Error(ErrorCode::CycleDetected,
                    fmt::format("{} of {} nodes lie on or behind a cycle",
                                indegree.size() - order.size(), indegree.size()));
    }
    return order;
}

}  // namespace prospector
