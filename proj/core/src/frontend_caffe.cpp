// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

#include "frontend_internal.hpp"
#include "prospector/protowire.hpp"

namespace prospector::detail {

namespace {

constexpr std::string_view k_framework = "caffe";

[[noreturn]] void malformed(const std::string& msg) { throw Error(ErrorCode::MalformedModel, msg); }

// Field keys of caffe.proto; V1 layers renumber most of them.
struct LayerKeys {
    FieldKey name, type, bottom, top, blobs, include;
    FieldKey convolution_param, inner_product_param, pooling_param, concat_param;
};

constexpr LayerKeys k_layer{{"name", 1},   {"type", 2},   {"bottom", 3},
                            {"top", 4},    {"blobs", 7},  {"include", 8},
                            {"convolution_param", 106},   {"inner_product_param", 117},
                            {"pooling_param", 121},       {"concat_param", 104}};
constexpr LayerKeys k_v1_layer{{"name", 4},   {"type", 5},   {"bottom", 2},
                               {"top", 3},    {"blobs", 6},  {"include", 32},
                               {"convolution_param", 10},    {"inner_product_param", 17},
                               {"pooling_param", 19},        {"concat_param", 9}};

constexpr FieldKey k_net_layer{"layer", 100};
constexpr FieldKey k_net_layers{"layers", 2};
constexpr FieldKey k_net_input{"input", 3};
constexpr FieldKey k_net_input_dim{"input_dim", 4};
constexpr FieldKey k_net_input_shape{"input_shape", 8};
constexpr FieldKey k_net_name{"name", 1};
constexpr FieldKey k_shape_dim{"dim", 1};

const std::map<std::int64_t, std::string_view>& v1_types() {
    static const std::map<std::int64_t, std::string_view> types{
        {1, "Accuracy"},  {2, "BNLL"},     {3, "Concat"},      {4, "Convolution"}, {5, "Data"},
        {6, "Dropout"},   {7, "EuclideanLoss"}, {8, "Flatten"}, {12, "ImageData"},  {14, "InnerProduct"},
        {15, "LRN"},      {17, "Pooling"}, {18, "ReLU"},       {19, "Sigmoid"},     {20, "Softmax"},
        {21, "SoftmaxWithLoss"}, {22, "Split"}, {23, "TanH"},  {25, "Eltwise"},     {26, "Power"},
        {29, "MemoryData"}, {33, "Slice"}, {35, "AbsVal"},     {36, "Silence"},     {38, "Exp"},
        {39, "Deconvolution"},
    };
    return types;
}

std::string v1_type_from_token(const std::string& token) {
    static const std::map<std::string, std::string_view, std::less<>> names{
        {"ACCURACY", "Accuracy"},   {"BNLL", "BNLL"},         {"CONCAT", "Concat"},
        {"CONVOLUTION", "Convolution"}, {"DATA", "Data"},     {"DROPOUT", "Dropout"},
        {"EUCLIDEAN_LOSS", "EuclideanLoss"}, {"FLATTEN", "Flatten"}, {"IMAGE_DATA", "ImageData"},
        {"INNER_PRODUCT", "InnerProduct"}, {"LRN", "LRN"},   {"POOLING", "Pooling"},
        {"RELU", "ReLU"},           {"SIGMOID", "Sigmoid"},   {"SOFTMAX", "Softmax"},
        {"SOFTMAX_LOSS", "SoftmaxWithLoss"}, {"SPLIT", "Split"}, {"TANH", "TanH"},
        {"ELTWISE", "Eltwise"},     {"POWER", "Power"},       {"MEMORY_DATA", "MemoryData"},
        {"SLICE", "Slice"},         {"ABSVAL", "AbsVal"},     {"SILENCE", "Silence"},
        {"EXP", "Exp"},             {"DECONVOLUTION", "Deconvolution"},
    };
    if (auto it = names.find(token); it != names.end()) return std::string(it->second);
    return token;
}

/// Enum field readable from both encodings: text carries the identifier,
/// binary the number.
std::optional<std::int64_t> enum_value(const ProtoNode& node, FieldKey key,
                                       const std::map<std::string, std::int64_t, std::less<>>& names) {
    if (node.is_binary()) return node.int_value(key);
    auto token = node.string(key);
    if (!token) return std::nullopt;
    if (auto it = names.find(*token); it != names.end()) return it->second;
    try {
        return std::stoll(*token);
    } catch (const std::exception&) {
        malformed(fmt::format("field '{}' has unknown enum value '{}'", key.name, *token));
    }
}

bool looks_binary(ByteView data) {
    const auto head = data.first(std::min<std::size_t>(data.size(), 4096));
    return std::any_of(head.begin(), head.end(), [](std::uint8_t c) { return c == 0 || (c < 0x09); });
}

ProtoNode parse_net(ByteView data) {
    if (looks_binary(data)) return ProtoNode::parse_binary(data);
    return ProtoNode::parse_text(as_chars(data));
}

struct Layer {
    std::string name;
    std::string type;
    std::vector<std::string> bottoms;
    std::vector<std::string> tops;
    ProtoNode node;
    const LayerKeys* keys;
};

std::vector<Layer> read_layers(const ProtoNode& net) {
    std::vector<Layer> out;
    for (auto& n : net.messages(k_net_layer)) {
        Layer l{n.string(k_layer.name).value_or(""), n.string(k_layer.type).value_or(""),
                n.strings(k_layer.bottom), n.strings(k_layer.top), n, &k_layer};
        out.push_back(std::move(l));
    }
    if (!out.empty()) return out;
    for (auto& n : net.messages(k_net_layers)) {
        std::string type;
        if (n.is_binary()) {
            const auto code = n.int_value(k_v1_layer.type).value_or(0);
            auto it = v1_types().find(code);
            type = it != v1_types().end() ? std::string(it->second) : fmt::format("V1_{}", code);
        } else {
            type = v1_type_from_token(n.string(k_v1_layer.type).value_or(""));
        }
        Layer l{n.string(k_v1_layer.name).value_or(""), std::move(type), n.strings(k_v1_layer.bottom),
                n.strings(k_v1_layer.top), n, &k_v1_layer};
        out.push_back(std::move(l));
    }
    return out;
}

bool train_only(const Layer& l) {
    if (l.type.find("Loss") != std::string::npos || l.type == "Accuracy" || l.type == "Silence") return true;
    static const std::map<std::string, std::int64_t, std::less<>> phases{{"TRAIN", 0}, {"TEST", 1}};
    for (const auto& rule : l.node.messages(l.keys->include)) {
        if (enum_value(rule, {"phase", 1}, phases) == 0) return true;
    }
    return false;
}

bool is_data_layer(std::string_view type) {
    return type == "Input" || type == "Data" || type == "ImageData" || type == "MemoryData" ||
           type == "DummyData" || type == "HDF5Data" || type == "WindowData" || type == "AnnotatedData";
}

Shape shape_of(const ProtoNode& blob_shape) {
    Shape s;
    for (auto d : blob_shape.ints(k_shape_dim)) s.push_back(d);
    return s;
}

std::vector<WeightTensor> read_blobs(const std::vector<ProtoNode>& blobs, std::string_view layer, std::string_view type) {
    std::vector<WeightTensor> out;
    const bool has_roles = type == "Convolution" || type == "Deconvolution" || type == "InnerProduct" ||
                           type == "ConvolutionDepthwise" || type == "DepthwiseConvolution";
    for (std::size_t i = 0; i < blobs.size(); ++i) {
        const auto& b = blobs[i];
        WeightTensor w;
        if (auto shape = b.message({"shape", 7})) {
            w.shape = shape_of(*shape);
        } else {
            for (FieldKey k : {FieldKey{"num", 1}, FieldKey{"channels", 2}, FieldKey{"height", 3}, FieldKey{"width", 4}}) {
                const auto d = b.int_value(k).value_or(0);
                if (d > 0) w.shape.push_back(d);
            }
        }
        w.data = b.float_bytes({"data", 5});
        if (w.data.empty()) continue;
        if (w.shape.empty()) w.shape = {static_cast<std::int64_t>(w.data.size() / 4)};
        if (element_count(w.shape) * 4 != static_cast<std::int64_t>(w.data.size())) {
            malformed(fmt::format("layer '{}' blob {} has {} bytes for shape of {} floats", layer, i, w.data.size(),
                                  element_count(w.shape)));
        }
        w.role = !has_roles ? WeightRole::Other : i == 0 ? WeightRole::Kernel : i == 1 ? WeightRole::Bias : WeightRole::Other;
        out.push_back(std::move(w));
    }
    return out;
}

/// Repeated field with an optional explicit h/w override pair.
std::pair<std::int64_t, std::int64_t> hw(const ProtoNode& p, FieldKey repeated, FieldKey h, FieldKey w,
                                         std::int64_t fallback) {
    auto values = p.ints(repeated);
    std::int64_t vh = values.empty() ? fallback : values[0];
    std::int64_t vw = values.size() > 1 ? values[1] : vh;
    if (auto x = p.int_value(h)) vh = *x;
    if (auto x = p.int_value(w)) vw = *x;
    return {vh, vw};
}

void conv_attrs(LayerNode& node, const Layer& l) {
    auto cp = l.node.message(l.keys->convolution_param);
    if (!cp) malformed(fmt::format("layer '{}' lacks convolution_param", l.name));
    auto& a = node.attrs;
    const auto [kh, kw] = hw(*cp, {"kernel_size", 4}, {"kernel_h", 11}, {"kernel_w", 12}, 0);
    if (kh <= 0 || kw <= 0) malformed(fmt::format("layer '{}' lacks a kernel size", l.name));
    const auto [sh, sw] = hw(*cp, {"stride", 6}, {"stride_h", 13}, {"stride_w", 14}, 1);
    const auto [ph, pw] = hw(*cp, {"pad", 3}, {"pad_h", 9}, {"pad_w", 10}, 0);
    const auto dil = cp->ints({"dilation", 18});
    a["kernel_h"] = kh;
    a["kernel_w"] = kw;
    a["stride_h"] = sh;
    a["stride_w"] = sw;
    a["dilation_h"] = dil.empty() ? std::int64_t{1} : dil[0];
    a["dilation_w"] = dil.size() > 1 ? dil[1] : dil.empty() ? std::int64_t{1} : dil[0];
    a["padding"] = std::string("explicit");
    a["pad_top"] = ph;
    a["pad_bottom"] = ph;
    a["pad_left"] = pw;
    a["pad_right"] = pw;
    const auto out = cp->int_value({"num_output", 1});
    if (!out) malformed(fmt::format("layer '{}' lacks num_output", l.name));
    a["out_channels"] = *out;
    const auto group = cp->int_value({"group", 5}).value_or(1);
    if (node.op.kind == OpKind::Conv2d) {
        a["groups"] = group;
        // One input channel per group and as many groups as outputs is a depthwise convolution.
        if (group > 1 && group == *out && !node.weights.empty() && node.weights[0].shape.size() == 4 &&
            node.weights[0].shape[1] == 1) {
            node.op = OpType::of(OpKind::DepthwiseConv2d);
            a.erase("groups");
        }
    }
}

void pool_attrs(LayerNode& node, const Layer& l) {
    auto pp = l.node.message(l.keys->pooling_param);
    auto& a = node.attrs;
    a["ceil_mode"] = std::int64_t{1};
    a["padding"] = std::string("explicit");
    if (!pp) {
        malformed(fmt::format("layer '{}' lacks pooling_param", l.name));
    }
    static const std::map<std::string, std::int64_t, std::less<>> kinds{{"MAX", 0}, {"AVE", 1}, {"STOCHASTIC", 2}};
    const auto kind = enum_value(*pp, {"pool", 1}, kinds).value_or(0);
    a["pool"] = std::string(kind == 1 ? "avg" : kind == 2 ? "stochastic" : "max");
    if (pp->int_value({"global_pooling", 12}).value_or(0) != 0) {
        a["global"] = std::int64_t{1};
    }
    const auto [kh, kw] = hw(*pp, {"kernel_size", 2}, {"kernel_h", 5}, {"kernel_w", 6}, 1);
    const auto [sh, sw] = hw(*pp, {"stride", 3}, {"stride_h", 7}, {"stride_w", 8}, 1);
    const auto [ph, pw] = hw(*pp, {"pad", 4}, {"pad_h", 9}, {"pad_w", 10}, 0);
    a["kernel_h"] = kh;
    a["kernel_w"] = kw;
    a["stride_h"] = sh;
    a["stride_w"] = sw;
    a["pad_top"] = ph;
    a["pad_bottom"] = ph;
    a["pad_left"] = pw;
    a["pad_right"] = pw;
    static const std::map<std::string, std::int64_t, std::less<>> rounds{{"CEIL", 0}, {"FLOOR", 1}};
    if (enum_value(*pp, {"round_mode", 13}, rounds).value_or(0) == 1) a["ceil_mode"] = std::int64_t{0};
}

void add_attrs(LayerNode& node, const Layer& l) {
    const auto& t = l.type;
    auto& a = node.attrs;
    if (t == "Convolution" || t == "ConvolutionDepthwise" || t == "DepthwiseConvolution" || t == "Deconvolution") {
        conv_attrs(node, l);
    } else if (t == "InnerProduct") {
        auto ip = l.node.message(l.keys->inner_product_param);
        if (!ip || !ip->int_value({"num_output", 1})) malformed(fmt::format("layer '{}' lacks num_output", l.name));
        a["units"] = *ip->int_value({"num_output", 1});
        a["flatten_axis"] = ip->int_value({"axis", 5}).value_or(1);
    } else if (t == "Pooling") {
        pool_attrs(node, l);
    } else if (t == "Concat") {
        std::int64_t axis = 1;
        if (auto cp = l.node.message(l.keys->concat_param)) {
            axis = cp->int_value({"axis", 2}).value_or(cp->int_value({"concat_dim", 1}).value_or(1));
        }
        a["axis"] = axis;
    } else if (t == "Flatten" && l.keys == &k_layer) {
        if (auto fp = l.node.message({"flatten_param", 135})) a["axis"] = fp->int_value({"axis", 1}).value_or(1);
    } else if (t == "Reshape" && l.keys == &k_layer) {
        if (auto rp = l.node.message({"reshape_param", 133})) {
            if (auto shape = rp->message({"shape", 1})) a["new_shape"] = shape_of(*shape);
        }
    }
}

}  // namespace

ModelGraph parse_caffe(ByteView structure, std::optional<ByteView> weights, const OpTable& ops) {
    const ProtoNode net = parse_net(structure);
    const auto layers = read_layers(net);
    if (layers.empty()) malformed("net has no layers");

    std::map<std::string, std::vector<ProtoNode>> blobs_by_layer;
    std::optional<ProtoNode> weight_net;
    if (weights) {
        weight_net = ProtoNode::parse_binary(*weights);
    } else if (net.is_binary()) {
        weight_net = net;
    }
    if (weight_net) {
        for (const auto& l : read_layers(*weight_net)) {
            auto blobs = l.node.messages(l.keys->blobs);
            if (!blobs.empty()) blobs_by_layer[l.name] = std::move(blobs);
        }
    }

    ModelGraph g;
    g.framework = std::string(k_framework);
    g.layout = Layout::Nchw;
    if (auto name = net.string(k_net_name)) g.metadata["net_name"] = *name;

    std::map<std::string, Shape> input_blobs;
    {
        const auto names = net.strings(k_net_input);
        const auto shapes = net.messages(k_net_input_shape);
        const auto dims = net.ints(k_net_input_dim);
        for (std::size_t i = 0; i < names.size(); ++i) {
            Shape s;
            if (i < shapes.size()) {
                s = shape_of(shapes[i]);
            } else if (dims.size() >= 4 * (i + 1)) {
                s.assign(dims.begin() + static_cast<std::ptrdiff_t>(4 * i), dims.begin() + static_cast<std::ptrdiff_t>(4 * i + 4));
            }
            input_blobs[names[i]] = std::move(s);
        }
    }

    std::map<std::string, NodeId> producer;
    NodeId next_id = 0;
    for (const auto& l : layers) {
        if (train_only(l)) continue;
        if (is_data_layer(l.type)) {
            Shape s;
            if (l.type == "Input" && l.keys == &k_layer) {
                if (auto ip = l.node.message({"input_param", 143})) {
                    const auto shapes = ip->messages({"shape", 1});
                    for (std::size_t i = 0; i < l.tops.size(); ++i) {
                        const auto& src = shapes.empty() ? Shape{} : shape_of(shapes[std::min(i, shapes.size() - 1)]);
                        input_blobs[l.tops[i]] = src;
                    }
                    continue;
                }
            }
            for (const auto& top : l.tops) input_blobs[top] = s;
            continue;
        }
        const NodeId id = next_id++;
        LayerNode node = make_node(id, l.name, ops, k_framework, l.type);
        if (auto it = blobs_by_layer.find(l.name); it != blobs_by_layer.end()) {
            node.weights = read_blobs(it->second, l.name, l.type);
        }
        add_attrs(node, l);
        for (std::size_t slot = 0; slot < l.bottoms.size(); ++slot) {
            const auto& bottom = l.bottoms[slot];
            if (auto it = producer.find(bottom); it != producer.end()) {
                g.edges.push_back({it->second, id, static_cast<std::int32_t>(slot)});
            } else if (auto in = input_blobs.find(bottom); in != input_blobs.end()) {
                g.inputs.push_back({id, static_cast<std::int32_t>(slot), in->second});
            } else {
                malformed(fmt::format("layer '{}' consumes undefined blob '{}'", l.name, bottom));
            }
        }
        for (const auto& top : l.tops) producer[top] = id;
        g.nodes.push_back(std::move(node));
    }
    if (g.nodes.empty()) malformed("net has no inference layers");

    std::set<NodeId> has_successor;
    for (const auto& e : g.edges) has_successor.insert(e.from);
    for (const auto& n : g.nodes) {
        if (!has_successor.contains(n.id)) g.outputs.push_back(n.id);
    }
    return g;
}

}  // namespace prospector::detail
