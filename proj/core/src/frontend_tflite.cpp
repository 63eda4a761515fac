// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <map>
#include <set>

#include <fmt/format.h>

#include "flatbuffer.hpp"
#include "frontend_internal.hpp"

namespace prospector::detail {

namespace {

constexpr std::string_view k_framework = "tflite";

// BuiltinOperator enum of the TFLite schema, by value.
constexpr std::string_view k_builtin_names[] = {
    "ADD", "AVERAGE_POOL_2D", "CONCATENATION", "CONV_2D", "DEPTHWISE_CONV_2D", "DEPTH_TO_SPACE",
    "DEQUANTIZE", "EMBEDDING_LOOKUP", "FLOOR", "FULLY_CONNECTED", "HASHTABLE_LOOKUP",
    "L2_NORMALIZATION", "L2_POOL_2D", "LOCAL_RESPONSE_NORMALIZATION", "LOGISTIC", "LSH_PROJECTION",
    "LSTM", "MAX_POOL_2D", "MUL", "RELU", "RELU_N1_TO_1", "RELU6", "RESHAPE", "RESIZE_BILINEAR",
    "RNN", "SOFTMAX", "SPACE_TO_DEPTH", "SVDF", "TANH", "CONCAT_EMBEDDINGS", "SKIP_GRAM", "CALL",
    "CUSTOM", "EMBEDDING_LOOKUP_SPARSE", "PAD", "UNIDIRECTIONAL_SEQUENCE_RNN", "GATHER",
    "BATCH_TO_SPACE_ND", "SPACE_TO_BATCH_ND", "TRANSPOSE", "MEAN", "SUB", "DIV", "SQUEEZE",
    "UNIDIRECTIONAL_SEQUENCE_LSTM", "STRIDED_SLICE", "BIDIRECTIONAL_SEQUENCE_RNN", "EXP",
    "TOPK_V2", "SPLIT", "LOG_SOFTMAX", "DELEGATE", "BIDIRECTIONAL_SEQUENCE_LSTM", "CAST", "PRELU",
    "MAXIMUM", "ARG_MAX", "MINIMUM", "LESS", "NEG", "PADV2", "GREATER", "GREATER_EQUAL",
    "LESS_EQUAL", "SELECT", "SLICE", "SIN", "TRANSPOSE_CONV", "SPARSE_TO_DENSE", "TILE",
    "EXPAND_DIMS", "EQUAL", "NOT_EQUAL", "LOG", "SUM", "SQRT", "RSQRT", "SHAPE", "POW", "ARG_MIN",
    "FAKE_QUANT", "REDUCE_PROD", "REDUCE_MAX", "PACK", "LOGICAL_OR", "ONE_HOT", "LOGICAL_AND",
    "LOGICAL_NOT", "UNPACK", "REDUCE_MIN", "FLOOR_DIV", "REDUCE_ANY", "SQUARE", "ZEROS_LIKE",
    "FILL", "FLOOR_MOD", "RANGE", "RESIZE_NEAREST_NEIGHBOR", "LEAKY_RELU", "SQUARED_DIFFERENCE",
    "MIRROR_PAD", "ABS", "SPLIT_V", "UNIQUE", "CEIL", "REVERSE_V2", "ADD_N", "GATHER_ND", "COS",
    "WHERE", "RANK", "ELU", "REVERSE_SEQUENCE", "MATRIX_DIAG", "QUANTIZE", "MATRIX_SET_DIAG",
    "ROUND", "HARD_SWISH", "IF", "WHILE", "NON_MAX_SUPPRESSION_V4", "NON_MAX_SUPPRESSION_V5",
    "SCATTER_ND", "SELECT_V2", "DENSIFY", "SEGMENT_SUM", "BATCH_MATMUL",
    "PLACEHOLDER_FOR_GREATER_OP_CODES", "CUMSUM", "CALL_ONCE", "BROADCAST_TO", "RFFT2D", "CONV_3D",
    "IMAG", "REAL", "COMPLEX_ABS", "HASHTABLE", "HASHTABLE_FIND", "HASHTABLE_IMPORT",
    "HASHTABLE_SIZE", "REDUCE_ALL", "CONV_3D_TRANSPOSE", "VAR_HANDLE", "READ_VARIABLE",
    "ASSIGN_VARIABLE", "BROADCAST_ARGS", "RANDOM_STANDARD_NORMAL", "BUCKETIZE", "RANDOM_UNIFORM",
    "MULTINOMIAL", "GELU", "DYNAMIC_UPDATE_SLICE", "RELU_0_TO_1", "UNSORTED_SEGMENT_PROD",
    "UNSORTED_SEGMENT_MAX", "UNSORTED_SEGMENT_SUM", "ATAN2", "UNSORTED_SEGMENT_MIN", "SIGN",
    "BITCAST", "BITWISE_XOR", "RIGHT_SHIFT", "STABLEHLO_LOGISTIC", "STABLEHLO_ADD",
    "STABLEHLO_DIVIDE", "STABLEHLO_MULTIPLY", "STABLEHLO_MAXIMUM", "STABLEHLO_RESHAPE",
    "STABLEHLO_CLAMP", "STABLEHLO_CONCATENATE", "STABLEHLO_BROADCAST_IN_DIM",
    "STABLEHLO_CONVOLUTION", "STABLEHLO_SLICE", "STABLEHLO_CUSTOM_CALL", "STABLEHLO_REDUCE",
    "STABLEHLO_ABS", "STABLEHLO_AND", "STABLEHLO_COSINE", "STABLEHLO_EXPONENTIAL",
    "STABLEHLO_FLOOR", "STABLEHLO_LOG", "STABLEHLO_MINIMUM", "STABLEHLO_NEGATE", "STABLEHLO_OR",
    "STABLEHLO_POWER", "STABLEHLO_REMAINDER", "STABLEHLO_RSQRT", "STABLEHLO_SELECT",
    "STABLEHLO_SUBTRACT", "STABLEHLO_TANH", "STABLEHLO_SCATTER", "STABLEHLO_COMPARE",
    "STABLEHLO_CONVERT", "STABLEHLO_DYNAMIC_SLICE", "STABLEHLO_DYNAMIC_UPDATE_SLICE",
    "STABLEHLO_PAD", "STABLEHLO_IOTA", "STABLEHLO_DOT_GENERAL", "STABLEHLO_REDUCE_WINDOW",
    "STABLEHLO_SORT", "STABLEHLO_WHILE", "STABLEHLO_GATHER", "STABLEHLO_TRANSPOSE", "DILATE",
    "STABLEHLO_RNG_BIT_GENERATOR", "REDUCE_WINDOW", "STABLEHLO_COMPOSITE", "STABLEHLO_SHIFT_LEFT",
    "STABLEHLO_CBRT", "STABLEHLO_CASE",
};

constexpr std::int32_t k_custom = 32;

namespace field {
constexpr int model_operator_codes = 1, model_subgraphs = 2, model_description = 3, model_buffers = 4;
constexpr int model_version = 0;
constexpr int subgraph_tensors = 0, subgraph_inputs = 1, subgraph_outputs = 2, subgraph_operators = 3,
              subgraph_name = 4;
constexpr int tensor_shape = 0, tensor_type = 1, tensor_buffer = 2, tensor_name = 3, tensor_sparsity = 6;
constexpr int op_opcode_index = 0, op_inputs = 1, op_outputs = 2, op_options_type = 3, op_options = 4;
constexpr int opcode_deprecated = 0, opcode_custom = 1, opcode_builtin = 3;
constexpr int buffer_data = 0, buffer_offset = 1, buffer_size = 2;
}  // namespace field

enum Builtin : std::int32_t {
    AVERAGE_POOL_2D = 1,
    CONCATENATION = 2,
    CONV_2D = 3,
    DEPTHWISE_CONV_2D = 4,
    FULLY_CONNECTED = 9,
    L2_POOL_2D = 12,
    MAX_POOL_2D = 17,
    RESHAPE = 22,
};

[[noreturn]] void malformed(const std::string& msg) { throw Error(ErrorCode::MalformedModel, msg); }

DType dtype_of(std::int8_t type) {
    switch (type) {
        case 0: return DType::F32;
        case 1: return DType::F16;
        case 2: return DType::I32;
        case 3: return DType::U8;
        case 9: return DType::I8;
        default: return DType::Other;
    }
}

struct TensorInfo {
    Shape shape;
    DType dtype = DType::F32;
    std::uint32_t buffer = 0;
    std::string name;
    bool sparse = false;
};

std::string op_name(const fb::Table& code) {
    const auto deprecated = static_cast<std::int32_t>(code.scalar<std::int8_t>(field::opcode_deprecated, 0));
    const auto builtin = std::max(deprecated, code.scalar<std::int32_t>(field::opcode_builtin, 0));
    if (builtin == k_custom) {
        return std::string(code.string(field::opcode_custom).value_or("CUSTOM"));
    }
    if (builtin >= 0 && static_cast<std::size_t>(builtin) < std::size(k_builtin_names)) {
        return std::string(k_builtin_names[builtin]);
    }
    return fmt::format("BUILTIN_{}", builtin);
}

std::int32_t builtin_code(const fb::Table& code) {
    const auto deprecated = static_cast<std::int32_t>(code.scalar<std::int8_t>(field::opcode_deprecated, 0));
    return std::max(deprecated, code.scalar<std::int32_t>(field::opcode_builtin, 0));
}

std::string padding_name(std::int8_t p) { return p == 1 ? "valid" : "same"; }

std::int64_t positive_or(std::int32_t v, std::int64_t fallback) { return v > 0 ? v : fallback; }

class Reader {
public:
    Reader(ByteView data, const OpTable& ops) : data_(data), ops_(ops) {}

    ModelGraph parse() {
        if (data_.size() < 8 || as_chars(data_.subspan(4, 4)) != "TFL3") {
            malformed("missing TFL3 file identifier");
        }
        const auto model = fb::Table::root(data_);
        ModelGraph g;
        g.framework = std::string(k_framework);
        g.layout = Layout::Nhwc;
        g.metadata["tflite_schema_version"] = std::to_string(model.scalar<std::uint32_t>(field::model_version, 0));
        if (auto d = model.string(field::model_description)) g.metadata["description"] = std::string(*d);

        const auto subgraphs = model.vector(field::model_subgraphs);
        if (!subgraphs || subgraphs->size() == 0) malformed("model has no subgraphs");
        g.metadata["subgraph_count"] = std::to_string(subgraphs->size());

        if (auto codes = model.vector(field::model_operator_codes)) {
            for (std::size_t i = 0; i < codes->size(); ++i) {
                const auto code = codes->table(i);
                opcodes_.push_back({builtin_code(code), op_name(code)});
            }
        }
        buffers_ = model.vector(field::model_buffers);

        const auto sg = subgraphs->table(0);
        if (auto name = sg.string(field::subgraph_name)) g.metadata["subgraph_name"] = std::string(*name);
        read_tensors(sg);

        std::set<std::int32_t> graph_inputs;
        if (auto v = sg.vector(field::subgraph_inputs)) {
            for (std::size_t i = 0; i < v->size(); ++i) graph_inputs.insert(v->scalar<std::int32_t>(i));
        }

        const auto operators = sg.vector(field::subgraph_operators);
        if (!operators || operators->size() == 0) malformed("main subgraph has no operators");

        std::map<std::int32_t, NodeId> producer;
        std::size_t custom_ops = 0;
        for (std::size_t i = 0; i < operators->size(); ++i) {
            const auto op = operators->table(i);
            const auto id = static_cast<NodeId>(i);
            const auto index = op.scalar<std::uint32_t>(field::op_opcode_index, 0);
            if (index >= opcodes_.size()) malformed(fmt::format("operator {} has opcode index {}", i, index));
            const auto& [code, source_op] = opcodes_[index];
            if (code == k_custom) ++custom_ops;

            const auto inputs = tensor_list(op, field::op_inputs);
            const auto outputs = tensor_list(op, field::op_outputs);
            std::string name = !outputs.empty() && outputs[0] >= 0 ? tensor(outputs[0]).name : std::string{};
            if (name.empty()) name = fmt::format("{}_{}", source_op, i);

            LayerNode node = make_node(id, std::move(name), ops_, k_framework, source_op);
            if (!outputs.empty() && outputs[0] >= 0) {
                const auto& out = tensor(outputs[0]);
                if (!out.shape.empty() && std::all_of(out.shape.begin(), out.shape.end(), [](auto d) { return d > 0; })) {
                    node.attrs["out_shape"] = out.shape;
                }
                node.attrs["out_dtype"] = std::string(to_string(out.dtype));
            }

            for (std::size_t slot = 0; slot < inputs.size(); ++slot) {
                const auto t = inputs[slot];
                if (t < 0) continue;
                if (auto it = producer.find(t); it != producer.end()) {
                    g.edges.push_back({it->second, id, static_cast<std::int32_t>(slot)});
                } else if (graph_inputs.contains(t)) {
                    Shape shape = tensor(t).shape;
                    for (auto& d : shape) d = d > 0 ? d : 1;
                    g.inputs.push_back({id, static_cast<std::int32_t>(slot), std::move(shape)});
                } else if (auto bytes = buffer_bytes(tensor(t).buffer); !bytes.empty()) {
                    const auto& info = tensor(t);
                    if (info.sparse) {
                        throw Error(ErrorCode::UnsupportedFeature,
                                    fmt::format("tensor '{}' uses sparse storage", info.name));
                    }
                    // i32 operands of unweighted ops are shapes, axes or sizes.
                    if (weight_role(code, slot) == WeightRole::Other && info.dtype == DType::I32) continue;
                    WeightTensor w;
                    w.role = weight_role(code, slot);
                    w.shape = info.shape;
                    w.dtype = info.dtype;
                    w.data.assign(bytes.begin(), bytes.end());
                    node.weights.push_back(std::move(w));
                }
            }
            add_attrs(node, code, op, inputs);
            for (auto t : outputs) {
                if (t >= 0) producer[t] = id;
            }
            g.nodes.push_back(std::move(node));
        }
        if (custom_ops > 0) g.metadata["custom_op_count"] = std::to_string(custom_ops);

        std::set<NodeId> outs;
        if (auto v = sg.vector(field::subgraph_outputs)) {
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (auto it = producer.find(v->scalar<std::int32_t>(i)); it != producer.end()) outs.insert(it->second);
            }
        }
        g.outputs.assign(outs.begin(), outs.end());
        return g;
    }

private:
    void read_tensors(const fb::Table& sg) {
        const auto tensors = sg.vector(field::subgraph_tensors);
        if (!tensors) return;
        for (std::size_t i = 0; i < tensors->size(); ++i) {
            const auto t = tensors->table(i);
            TensorInfo info;
            if (auto shape = t.vector(field::tensor_shape)) {
                for (std::size_t k = 0; k < shape->size(); ++k) info.shape.push_back(shape->scalar<std::int32_t>(k));
            }
            info.dtype = dtype_of(t.scalar<std::int8_t>(field::tensor_type, 0));
            info.buffer = t.scalar<std::uint32_t>(field::tensor_buffer, 0);
            info.name = std::string(t.string(field::tensor_name).value_or(""));
            info.sparse = t.has(field::tensor_sparsity);
            tensors_.push_back(std::move(info));
        }
    }

    const TensorInfo& tensor(std::int32_t index) const {
        if (index < 0 || static_cast<std::size_t>(index) >= tensors_.size()) {
            malformed(fmt::format("tensor index {} out of range {}", index, tensors_.size()));
        }
        return tensors_[static_cast<std::size_t>(index)];
    }

    static std::vector<std::int32_t> tensor_list(const fb::Table& op, int f) {
        std::vector<std::int32_t> out;
        if (auto v = op.vector(f)) {
            for (std::size_t i = 0; i < v->size(); ++i) out.push_back(v->scalar<std::int32_t>(i));
        }
        return out;
    }

    ByteView buffer_bytes(std::uint32_t index) const {
        if (!buffers_ || index == 0 || index >= buffers_->size()) return {};
        const auto buf = buffers_->table(index);
        if (auto data = buf.vector(field::buffer_data)) return data->bytes();
        const auto offset = buf.scalar<std::uint64_t>(field::buffer_offset, 0);
        const auto size = buf.scalar<std::uint64_t>(field::buffer_size, 0);
        if (offset > 1) {
            if (offset > data_.size() || size > data_.size() - offset) {
                malformed(fmt::format("buffer {} range exceeds the file", index));
            }
            return data_.subspan(offset, size);
        }
        return {};
    }

    static WeightRole weight_role(std::int32_t code, std::size_t slot) {
        if (code == CONV_2D || code == DEPTHWISE_CONV_2D || code == FULLY_CONNECTED) {
            if (slot == 1) return WeightRole::Kernel;
            if (slot == 2) return WeightRole::Bias;
        }
        return WeightRole::Other;
    }

    Shape input_shape(const std::vector<std::int32_t>& inputs, std::size_t slot) const {
        if (slot >= inputs.size() || inputs[slot] < 0) return {};
        return tensor(inputs[slot]).shape;
    }

    void add_attrs(LayerNode& node, std::int32_t code, const fb::Table& op, const std::vector<std::int32_t>& inputs) {
        const auto options = op.table(field::op_options);
        auto& a = node.attrs;
        switch (code) {
            case CONV_2D: {
                const auto w = input_shape(inputs, 1);
                if (w.size() != 4) malformed(fmt::format("CONV_2D '{}' has a weight of rank {}", node.name, w.size()));
                a["out_channels"] = w[0];
                a["kernel_h"] = w[1];
                a["kernel_w"] = w[2];
                const auto in = input_shape(inputs, 0);
                if (in.size() == 4 && in[3] > 0 && w[3] > 0 && in[3] != w[3] && in[3] % w[3] == 0) {
                    a["groups"] = in[3] / w[3];
                }
                if (options) {
                    a["padding"] = padding_name(options->scalar<std::int8_t>(0, 0));
                    a["stride_w"] = positive_or(options->scalar<std::int32_t>(1, 1), 1);
                    a["stride_h"] = positive_or(options->scalar<std::int32_t>(2, 1), 1);
                    a["fused_activation"] = std::int64_t{options->scalar<std::int8_t>(3, 0)};
                    a["dilation_w"] = positive_or(options->scalar<std::int32_t>(4, 1), 1);
                    a["dilation_h"] = positive_or(options->scalar<std::int32_t>(5, 1), 1);
                } else {
                    a["padding"] = std::string("same");
                    a["stride_w"] = std::int64_t{1};
                    a["stride_h"] = std::int64_t{1};
                }
                break;
            }
            case DEPTHWISE_CONV_2D: {
                const auto w = input_shape(inputs, 1);
                if (w.size() != 4) {
                    malformed(fmt::format("DEPTHWISE_CONV_2D '{}' has a weight of rank {}", node.name, w.size()));
                }
                a["kernel_h"] = w[1];
                a["kernel_w"] = w[2];
                a["out_channels"] = w[3];
                if (options) {
                    a["padding"] = padding_name(options->scalar<std::int8_t>(0, 0));
                    a["stride_w"] = positive_or(options->scalar<std::int32_t>(1, 1), 1);
                    a["stride_h"] = positive_or(options->scalar<std::int32_t>(2, 1), 1);
                    a["depth_multiplier"] = positive_or(options->scalar<std::int32_t>(3, 1), 1);
                    a["fused_activation"] = std::int64_t{options->scalar<std::int8_t>(4, 0)};
                    a["dilation_w"] = positive_or(options->scalar<std::int32_t>(5, 1), 1);
                    a["dilation_h"] = positive_or(options->scalar<std::int32_t>(6, 1), 1);
                } else {
                    a["padding"] = std::string("same");
                    a["stride_w"] = std::int64_t{1};
                    a["stride_h"] = std::int64_t{1};
                }
                break;
            }
            case FULLY_CONNECTED: {
                const auto w = input_shape(inputs, 1);
                if (w.size() != 2) {
                    malformed(fmt::format("FULLY_CONNECTED '{}' has a weight of rank {}", node.name, w.size()));
                }
                a["units"] = w[0];
                a["in_features"] = w[1];
                if (options) {
                    a["fused_activation"] = std::int64_t{options->scalar<std::int8_t>(0, 0)};
                    a["keep_dims"] = std::int64_t{options->scalar<std::uint8_t>(2, 0) != 0};
                }
                break;
            }
            case AVERAGE_POOL_2D:
            case MAX_POOL_2D:
            case L2_POOL_2D: {
                a["pool"] = std::string(code == MAX_POOL_2D ? "max" : code == L2_POOL_2D ? "l2" : "avg");
                if (!options) malformed(fmt::format("pool '{}' lacks options", node.name));
                a["padding"] = padding_name(options->scalar<std::int8_t>(0, 0));
                a["stride_w"] = positive_or(options->scalar<std::int32_t>(1, 1), 1);
                a["stride_h"] = positive_or(options->scalar<std::int32_t>(2, 1), 1);
                a["kernel_w"] = positive_or(options->scalar<std::int32_t>(3, 1), 1);
                a["kernel_h"] = positive_or(options->scalar<std::int32_t>(4, 1), 1);
                a["fused_activation"] = std::int64_t{options->scalar<std::int8_t>(5, 0)};
                break;
            }
            case CONCATENATION:
                a["axis"] = std::int64_t{options ? options->scalar<std::int32_t>(0, 0) : 0};
                break;
            case RESHAPE: {
                std::vector<std::int64_t> shape;
                if (options) {
                    if (auto v = options->vector(0)) {
                        for (std::size_t i = 0; i < v->size(); ++i) shape.push_back(v->scalar<std::int32_t>(i));
                    }
                }
                if (shape.empty() && inputs.size() > 1 && inputs[1] >= 0) {
                    const auto& t = tensor(inputs[1]);
                    const auto bytes = buffer_bytes(t.buffer);
                    if (t.dtype == DType::I32 && bytes.size() % 4 == 0) {
                        for (std::size_t i = 0; i < bytes.size(); i += 4) shape.push_back(load_le<std::int32_t>(&bytes[i]));
                    }
                }
                if (!shape.empty()) a["new_shape"] = shape;
                break;
            }
            default:
                break;
        }
    }

    ByteView data_;
    const OpTable& ops_;
    std::vector<std::pair<std::int32_t, std::string>> opcodes_;
    std::vector<TensorInfo> tensors_;
    std::optional<fb::Vector> buffers_;
};

}  // namespace

ModelGraph parse_tflite(ByteView data, const OpTable& ops) { return Reader(data, ops).parse(); }

}  // namespace prospector::detail
