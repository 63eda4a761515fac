// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "prospector/bytes.hpp"

namespace prospector {

using FrameworkId = std::string;
using NodeId = std::int32_t;
using Shape = std::vector<std::int64_t>;

enum class OpKind {
    Conv2d,
    DepthwiseConv2d,
    Dense,
    Activation,
    Pool,
    Math,
    Quantize,
    Dequantize,
    Resize,
    Slice,
    Concat,
    Rnn,
    Other,
};

std::string_view to_string(OpKind kind) noexcept;
std::optional<OpKind> op_kind_from_string(std::string_view text) noexcept;

/// Canonical op. `tag` keeps the source op name for OpKind::Other and is
/// empty otherwise.
struct OpType {
    OpKind kind = OpKind::Other;
    std::string tag;

    static OpType of(OpKind kind) { return {kind, {}}; }
    static OpType other(std::string tag) { return {OpKind::Other, std::move(tag)}; }

    /// "conv2d", "dense", ..., or "other(<tag>)".
    std::string str() const;

    friend bool operator==(const OpType&, const OpType&) = default;
};

enum class WeightRole { Kernel, Bias, Other };
enum class DType { F32, F16, I8, U8, I32, Other };

std::string_view to_string(WeightRole role) noexcept;
std::string_view to_string(DType dtype) noexcept;
std::optional<WeightRole> weight_role_from_string(std::string_view text) noexcept;
std::optional<DType> dtype_from_string(std::string_view text) noexcept;

/// Bytes per element; 0 for DType::Other (element width not tracked).
std::size_t dtype_size(DType dtype) noexcept;
bool is_integer(DType dtype) noexcept;

std::int64_t element_count(const Shape& shape) noexcept;

struct WeightTensor {
    WeightRole role = WeightRole::Other;
    Shape shape;
    DType dtype = DType::F32;
    Bytes data;  // exact source payload

    std::int64_t param_count() const noexcept { return element_count(shape); }
    friend bool operator==(const WeightTensor&, const WeightTensor&) = default;
};

using AttrValue = std::variant<std::int64_t, double, std::string, std::vector<std::int64_t>>;
using Attrs = std::map<std::string, AttrValue, std::less<>>;

std::optional<std::int64_t> attr_int(const Attrs& attrs, std::string_view key);
std::optional<double> attr_double(const Attrs& attrs, std::string_view key);
std::optional<std::string> attr_string(const Attrs& attrs, std::string_view key);
std::optional<std::vector<std::int64_t>> attr_ints(const Attrs& attrs, std::string_view key);

struct LayerNode {
    NodeId id = 0;
    std::string name;  // verbatim from the source format
    OpType op;
    Attrs attrs;
    std::vector<WeightTensor> weights;

    std::int64_t param_count() const noexcept;
    friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

/// Data edge; `slot` is the consumer's input position.
struct Edge {
    NodeId from = 0;
    NodeId to = 0;
    std::int32_t slot = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

/// A graph-level input feeding `slot` of `node`.
struct GraphInput {
    NodeId node = 0;
    std::int32_t slot = 0;
    Shape shape;
    friend bool operator==(const GraphInput&, const GraphInput&) = default;
};

enum class Layout { Nchw, Nhwc };
std::string_view to_string(Layout layout) noexcept;

/// Unified DAG of a parsed model. Immutable once built by a frontend or the
/// native loader; nodes are kept sorted by id.
struct ModelGraph {
    std::string model_id;
    FrameworkId framework;
    Layout layout = Layout::Nchw;
    std::vector<LayerNode> nodes;
    std::vector<Edge> edges;
    std::vector<GraphInput> inputs;
    std::vector<NodeId> outputs;
    std::map<std::string, std::string> metadata;

    const LayerNode* find_node(NodeId id) const noexcept;
    std::int64_t param_count() const noexcept;

    friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

/// Checks structural invariants: unique ids, edge endpoints exist, at least
/// one input and output, weight byte lengths, conv attrs. Throws `code`.
void check_graph(const ModelGraph& graph, ErrorCode code = ErrorCode::MalformedModel);

/// Kahn's algorithm with ascending-id tie breaking. Throws CycleDetected.
std::vector<NodeId> topological_order(const ModelGraph& graph);

}  // namespace prospector
