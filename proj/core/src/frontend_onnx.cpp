// SPDX-License-Identifier: Apache-2.0
#include <map>
#include <set>

#include <fmt/format.h>

#include "frontend_internal.hpp"
#include "prospector/protowire.hpp"

namespace prospector::detail {

namespace {

constexpr std::string_view k_framework = "onnx";

[[noreturn]] void malformed(const std::string& msg) { throw Error(ErrorCode::MalformedModel, msg); }

namespace key {
constexpr FieldKey model_ir_version{"ir_version", 1}, model_producer{"producer_name", 2}, model_graph{"graph", 7},
    model_opset{"opset_import", 8};
constexpr FieldKey graph_node{"node", 1}, graph_name{"name", 2}, graph_initializer{"initializer", 5},
    graph_input{"input", 11}, graph_output{"output", 12}, graph_value_info{"value_info", 13};
constexpr FieldKey node_input{"input", 1}, node_output{"output", 2}, node_name{"name", 3}, node_op{"op_type", 4},
    node_attribute{"attribute", 5};
constexpr FieldKey attr_name{"name", 1}, attr_f{"f", 2}, attr_i{"i", 3}, attr_s{"s", 4}, attr_t{"t", 5},
    attr_ints{"ints", 8};
constexpr FieldKey tensor_dims{"dims", 1}, tensor_type{"data_type", 2}, tensor_float{"float_data", 4},
    tensor_int32{"int32_data", 5}, tensor_int64{"int64_data", 7}, tensor_name{"name", 8}, tensor_raw{"raw_data", 9};
constexpr FieldKey vi_name{"name", 1}, vi_type{"type", 2}, type_tensor{"tensor_type", 1}, tt_elem{"elem_type", 1},
    tt_shape{"shape", 2}, shape_dim{"dim", 1}, dim_value{"dim_value", 1};
constexpr FieldKey opset_version{"version", 2};
}  // namespace key

DType dtype_of(std::int64_t t) {
    switch (t) {
        case 1: return DType::F32;
        case 2: return DType::U8;
        case 3: return DType::I8;
        case 6: return DType::I32;
        case 10: return DType::F16;
        default: return DType::Other;
    }
}

std::size_t element_width(std::int64_t t) {
    switch (t) {
        case 1: case 6: return 4;
        case 2: case 3: case 9: return 1;
        case 4: case 5: case 10: case 16: return 2;
        case 7: case 11: case 13: return 8;
        case 12: return 4;
        default: return 0;
    }
}

struct Constant {
    Shape shape;
    DType dtype = DType::F32;
    Bytes data;
    std::vector<std::int64_t> ints;  // decoded integer values, for shape inputs
};

Constant read_tensor(const ProtoNode& t) {
    Constant c;
    c.shape = t.ints(key::tensor_dims);
    const auto type = t.int_value(key::tensor_type).value_or(0);
    c.dtype = dtype_of(type);
    const auto name = t.string(key::tensor_name).value_or("");
    if (auto raw = t.string(key::tensor_raw)) {
        c.data = to_bytes(*raw);
    } else if (type == 1) {
        c.data = t.float_bytes(key::tensor_float);
    } else if (type == 7) {
        for (auto v : t.ints(key::tensor_int64)) {
            std::uint8_t b[8];
            std::memcpy(b, &v, 8);
            c.data.insert(c.data.end(), b, b + 8);
        }
    } else if (type == 6 || type == 2 || type == 3) {
        const auto width = element_width(type);
        for (auto v : t.ints(key::tensor_int32)) {
            const auto x = static_cast<std::int32_t>(v);
            std::uint8_t b[4];
            std::memcpy(b, &x, 4);
            c.data.insert(c.data.end(), b, b + width);
        }
    } else {
        throw Error(ErrorCode::UnsupportedFeature, fmt::format("initializer '{}' has unsupported storage", name));
    }
    const auto width = element_width(type);
    const auto count = element_count(c.shape);
    if (width != 0 && c.data.size() != static_cast<std::size_t>(count) * width) {
        malformed(fmt::format("initializer '{}' has {} bytes for {} elements", name, c.data.size(), count));
    }
    if (type == 7) {
        for (std::size_t i = 0; i + 8 <= c.data.size(); i += 8) c.ints.push_back(load_le<std::int64_t>(&c.data[i]));
    } else if (type == 6) {
        for (std::size_t i = 0; i + 4 <= c.data.size(); i += 4) c.ints.push_back(load_le<std::int32_t>(&c.data[i]));
    }
    return c;
}

struct Attribute {
    std::optional<std::int64_t> i;
    std::optional<double> f;
    std::optional<std::string> s;
    std::vector<std::int64_t> ints;
    std::optional<ProtoNode> t;
};

std::map<std::string, Attribute> read_attrs(const ProtoNode& node) {
    std::map<std::string, Attribute> out;
    for (const auto& a : node.messages(key::node_attribute)) {
        Attribute attr;
        attr.i = a.int_value(key::attr_i);
        attr.f = a.real(key::attr_f);
        attr.s = a.string(key::attr_s);
        attr.ints = a.ints(key::attr_ints);
        attr.t = a.message(key::attr_t);
        out[a.string(key::attr_name).value_or("")] = std::move(attr);
    }
    return out;
}

Shape value_shape(const ProtoNode& vi, bool& known) {
    Shape s;
    known = false;
    auto type = vi.message(key::vi_type);
    if (!type) return s;
    auto tt = type->message(key::type_tensor);
    if (!tt) return s;
    auto shape = tt->message(key::tt_shape);
    if (!shape) return s;
    known = true;
    for (const auto& d : shape->messages(key::shape_dim)) {
        const auto v = d.int_value(key::dim_value);
        if (!v || *v <= 0) {
            known = false;
            s.push_back(1);  // symbolic or dynamic dimension
        } else {
            s.push_back(*v);
        }
    }
    return s;
}

WeightRole role_for(std::string_view op, std::size_t slot) {
    if (op == "Conv" || op == "Gemm" || op == "ConvTranspose") {
        if (slot == 1) return WeightRole::Kernel;
        if (slot == 2) return WeightRole::Bias;
    }
    if (op == "MatMul" && slot == 1) return WeightRole::Kernel;
    return WeightRole::Other;
}

void window_attrs(Attrs& a, const std::map<std::string, Attribute>& attrs, std::int64_t kh, std::int64_t kw) {
    auto ints = [&](const char* name) -> std::vector<std::int64_t> {
        auto it = attrs.find(name);
        return it == attrs.end() ? std::vector<std::int64_t>{} : it->second.ints;
    };
    const auto kernel = ints("kernel_shape");
    a["kernel_h"] = kernel.size() >= 2 ? kernel[0] : kh;
    a["kernel_w"] = kernel.size() >= 2 ? kernel[1] : kw;
    const auto strides = ints("strides");
    a["stride_h"] = strides.size() >= 2 ? strides[0] : std::int64_t{1};
    a["stride_w"] = strides.size() >= 2 ? strides[1] : std::int64_t{1};
    const auto dil = ints("dilations");
    a["dilation_h"] = dil.size() >= 2 ? dil[0] : std::int64_t{1};
    a["dilation_w"] = dil.size() >= 2 ? dil[1] : std::int64_t{1};
    std::string auto_pad = "NOTSET";
    if (auto it = attrs.find("auto_pad"); it != attrs.end() && it->second.s) auto_pad = *it->second.s;
    if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
        a["padding"] = std::string("same");
    } else if (auto_pad == "VALID") {
        a["padding"] = std::string("valid");
    } else {
        const auto pads = ints("pads");
        a["padding"] = std::string("explicit");
        a["pad_top"] = pads.size() >= 4 ? pads[0] : std::int64_t{0};
        a["pad_left"] = pads.size() >= 4 ? pads[1] : std::int64_t{0};
        a["pad_bottom"] = pads.size() >= 4 ? pads[2] : std::int64_t{0};
        a["pad_right"] = pads.size() >= 4 ? pads[3] : std::int64_t{0};
    }
}

std::int64_t attr_i(const std::map<std::string, Attribute>& attrs, const char* name, std::int64_t fallback) {
    auto it = attrs.find(name);
    return it != attrs.end() && it->second.i ? *it->second.i : fallback;
}

}  // namespace

ModelGraph parse_onnx(ByteView data, const OpTable& ops) {
    const auto model = ProtoNode::parse_binary(data);
    const auto graph = model.message(key::model_graph);
    if (!graph) malformed("model has no graph");

    ModelGraph g;
    g.framework = std::string(k_framework);
    g.layout = Layout::Nchw;
    if (auto v = model.int_value(key::model_ir_version)) g.metadata["ir_version"] = std::to_string(*v);
    if (auto p = model.string(key::model_producer)) g.metadata["producer_name"] = *p;
    if (auto name = graph->string(key::graph_name)) g.metadata["graph_name"] = *name;
    for (const auto& opset : model.messages(key::model_opset)) {
        if (!opset.has({"domain", 1}) || opset.string({"domain", 1})->empty()) {
            g.metadata["opset"] = std::to_string(opset.int_value(key::opset_version).value_or(0));
        }
    }

    std::map<std::string, Constant> constants;
    for (const auto& t : graph->messages(key::graph_initializer)) {
        constants[t.string(key::tensor_name).value_or("")] = read_tensor(t);
    }
    std::map<std::string, Shape> inputs;
    for (const auto& vi : graph->messages(key::graph_input)) {
        const auto name = vi.string(key::vi_name).value_or("");
        if (constants.contains(name)) continue;
        bool known = false;
        inputs[name] = value_shape(vi, known);
    }
    std::map<std::string, Shape> declared;
    for (const auto& vi : graph->messages(key::graph_value_info)) {
        bool known = false;
        auto s = value_shape(vi, known);
        if (known) declared[vi.string(key::vi_name).value_or("")] = std::move(s);
    }
    for (const auto& vi : graph->messages(key::graph_output)) {
        bool known = false;
        auto s = value_shape(vi, known);
        if (known) declared[vi.string(key::vi_name).value_or("")] = std::move(s);
    }

    std::map<std::string, NodeId> producer;
    NodeId next_id = 0;
    for (const auto& n : graph->messages(key::graph_node)) {
        const auto op = n.string(key::node_op).value_or("");
        const auto in_names = n.strings(key::node_input);
        const auto out_names = n.strings(key::node_output);
        const auto attrs = read_attrs(n);

        if (op == "Constant") {
            auto it = attrs.find("value");
            if (it != attrs.end() && it->second.t && !out_names.empty()) {
                constants[out_names[0]] = read_tensor(*it->second.t);
                continue;
            }
        }

        const NodeId id = next_id++;
        std::string name = n.string(key::node_name).value_or("");
        if (name.empty() && !out_names.empty()) name = out_names[0];
        LayerNode node = make_node(id, std::move(name), ops, k_framework, op);

        for (std::size_t slot = 0; slot < in_names.size(); ++slot) {
            const auto& in = in_names[slot];
            if (in.empty()) continue;
            if (auto it = producer.find(in); it != producer.end()) {
                g.edges.push_back({it->second, id, static_cast<std::int32_t>(slot)});
            } else if (auto c = constants.find(in); c != constants.end()) {
                WeightTensor w;
                w.role = role_for(op, slot);
                w.shape = c->second.shape;
                w.dtype = c->second.dtype;
                w.data = c->second.data;
                if (w.param_count() > 0) node.weights.push_back(std::move(w));
            } else if (auto gi = inputs.find(in); gi != inputs.end()) {
                g.inputs.push_back({id, static_cast<std::int32_t>(slot), gi->second});
            } else {
                malformed(fmt::format("node '{}' consumes undefined tensor '{}'", node.name, in));
            }
        }

        auto& a = node.attrs;
        auto constant_shape = [&](std::size_t slot) -> const Constant* {
            if (slot >= in_names.size()) return nullptr;
            auto it = constants.find(in_names[slot]);
            return it == constants.end() ? nullptr : &it->second;
        };
        if (op == "Conv") {
            const auto* w = constant_shape(1);
            if (!w || w->shape.size() != 4) malformed(fmt::format("Conv '{}' needs a constant rank-4 weight", node.name));
            window_attrs(a, attrs, w->shape[2], w->shape[3]);
            const auto group = attr_i(attrs, "group", 1);
            a["out_channels"] = w->shape[0];
            if (group > 1 && w->shape[1] == 1 && w->shape[0] % group == 0) {
                node.op = OpType::of(OpKind::DepthwiseConv2d);
                a["depth_multiplier"] = w->shape[0] / group;
            } else {
                a["groups"] = group;
            }
        } else if (op == "Gemm") {
            const auto* b = constant_shape(1);
            if (b && b->shape.size() == 2) {
                const bool trans_b = attr_i(attrs, "transB", 0) != 0;
                a["units"] = trans_b ? b->shape[0] : b->shape[1];
                a["in_features"] = trans_b ? b->shape[1] : b->shape[0];
            }
        } else if (op == "MatMul") {
            const auto* b = constant_shape(1);
            if (b && b->shape.size() == 2) {
                a["units"] = b->shape[1];
                a["in_features"] = b->shape[0];
                a["keep_dims"] = std::int64_t{1};
            } else {
                node.op = OpType::of(OpKind::Math);
                a["shape_rule"] = std::string("declared");
            }
        } else if (op == "MaxPool" || op == "AveragePool") {
            window_attrs(a, attrs, 1, 1);
            a["pool"] = std::string(op == "MaxPool" ? "max" : "avg");
            a["ceil_mode"] = attr_i(attrs, "ceil_mode", 0);
        } else if (op == "GlobalAveragePool" || op == "GlobalMaxPool") {
            a["global"] = std::int64_t{1};
            a["pool"] = std::string(op == "GlobalMaxPool" ? "max" : "avg");
            a["kernel_h"] = std::int64_t{1};
            a["kernel_w"] = std::int64_t{1};
            a["stride_h"] = std::int64_t{1};
            a["stride_w"] = std::int64_t{1};
        } else if (op == "Concat") {
            a["axis"] = attr_i(attrs, "axis", 1);
        } else if (op == "Flatten") {
            a["axis"] = attr_i(attrs, "axis", 1);
        } else if (op == "Reshape") {
            if (const auto* s = constant_shape(1); s && !s->ints.empty()) {
                a["new_shape"] = s->ints;
                a["shape_rule"] = std::string("reshape");
            }
        } else if (op == "LSTM" || op == "GRU" || op == "RNN") {
            if (auto h = attr_i(attrs, "hidden_size", 0); h > 0) {
                a["hidden_size"] = h;
                a["gates"] = std::int64_t{op == "LSTM" ? 4 : op == "GRU" ? 3 : 1};
                a["time_major"] = std::int64_t{attr_i(attrs, "layout", 0) == 0 ? 1 : 0};
                a["directions"] = std::int64_t{
                    attrs.contains("direction") && attrs.at("direction").s == std::string("bidirectional") ? 2 : 1};
            }
        }
        if (!out_names.empty()) {
            if (auto it = declared.find(out_names[0]); it != declared.end()) a["out_shape"] = it->second;
        }
        for (const auto& out : out_names) producer[out] = id;
        g.nodes.push_back(std::move(node));
    }
    if (g.nodes.empty()) malformed("graph has no nodes");

    std::set<NodeId> outs;
    for (const auto& vi : graph->messages(key::graph_output)) {
        if (auto it = producer.find(vi.string(key::vi_name).value_or("")); it != producer.end()) outs.insert(it->second);
    }
    g.outputs.assign(outs.begin(), outs.end());
    return g;
}

}  // namespace prospector::detail
