// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "frontend_internal.hpp"

namespace prospector::detail {

namespace {

constexpr std::string_view k_framework = "ncnn";
constexpr std::string_view k_magic = "7767517";

constexpr std::uint32_t k_tag_f32 = 0;
constexpr std::uint32_t k_tag_f16 = 0x01306B47;
constexpr std::uint32_t k_tag_i8 = 0x000D4B38;

[[noreturn]] void malformed(const std::string& msg) { throw Error(ErrorCode::MalformedModel, msg); }

/// Layer parameter value: scalar or array (keys written as -23300 - id).
struct ParamValue {
    std::vector<double> values;
    bool is_float = false;
    bool is_array = false;
};

struct ParamLine {
    std::string type;
    std::string name;
    std::vector<std::string> bottoms;
    std::vector<std::string> tops;
    std::map<int, ParamValue> params;

    std::int64_t i(int key, std::int64_t fallback) const {
        auto it = params.find(key);
        if (it == params.end() || it->second.values.empty()) return fallback;
        return static_cast<std::int64_t>(it->second.values[0]);
    }
    bool has(int key) const { return params.contains(key); }
};

double parse_number(std::string_view token, bool& is_float, std::string_view layer) {
    is_float = token.find_first_of(".eE") != std::string_view::npos;
    if (is_float) {
        try {
            return std::stod(std::string(token));
        } catch (const std::exception&) {
            malformed(fmt::format("layer '{}': bad number '{}'", layer, token));
        }
    }
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        malformed(fmt::format("layer '{}': bad integer '{}'", layer, token));
    }
    return static_cast<double>(v);
}

std::vector<ParamLine> parse_param(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    std::istringstream in{std::string(text)};
    std::string magic;
    if (!(in >> magic) || magic != k_magic) malformed("missing 7767517 magic");
    std::int64_t layer_count = 0;
    std::int64_t blob_count = 0;
    if (!(in >> layer_count >> blob_count) || layer_count < 0 || blob_count < 0) {
        malformed("bad layer/blob count line");
    }
    std::string line;
    std::getline(in, line);
    std::vector<ParamLine> layers;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        ParamLine p;
        if (!(ls >> p.type)) continue;
        std::int64_t nb = 0;
        std::int64_t nt = 0;
        if (!(ls >> p.name >> nb >> nt) || nb < 0 || nt < 0) {
            malformed(fmt::format("layer line {} is truncated", layers.size() + 1));
        }
        p.bottoms.resize(static_cast<std::size_t>(nb));
        p.tops.resize(static_cast<std::size_t>(nt));
        for (auto& b : p.bottoms) {
            if (!(ls >> b)) malformed(fmt::format("layer '{}' lists too few bottoms", p.name));
        }
        for (auto& t : p.tops) {
            if (!(ls >> t)) malformed(fmt::format("layer '{}' lists too few tops", p.name));
        }
        std::string kv;
        while (ls >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) malformed(fmt::format("layer '{}': bad parameter '{}'", p.name, kv));
            int key = 0;
            auto [ptr, ec] = std::from_chars(kv.data(), kv.data() + eq, key);
            if (ec != std::errc{} || ptr != kv.data() + eq) {
                malformed(fmt::format("layer '{}': bad parameter key '{}'", p.name, kv));
            }
            ParamValue value;
            std::string_view rest = std::string_view(kv).substr(eq + 1);
            if (key <= -23300) {
                key = -key - 23300;
                value.is_array = true;
                std::vector<std::string_view> items;
                std::size_t start = 0;
                while (start <= rest.size()) {
                    const auto comma = rest.find(',', start);
                    items.push_back(rest.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
                    if (comma == std::string_view::npos) break;
                    start = comma + 1;
                }
                if (items.empty()) malformed(fmt::format("layer '{}': empty array parameter", p.name));
                bool f = false;
                const auto n = static_cast<std::int64_t>(parse_number(items[0], f, p.name));
                if (n < 0 || static_cast<std::size_t>(n) + 1 != items.size()) {
                    malformed(fmt::format("layer '{}': array parameter {} declares {} items", p.name, key, n));
                }
                for (std::size_t k = 1; k < items.size(); ++k) {
                    value.values.push_back(parse_number(items[k], f, p.name));
                    value.is_float = value.is_float || f;
                }
            } else {
                value.values.push_back(parse_number(rest, value.is_float, p.name));
            }
            p.params[key] = std::move(value);
        }
        layers.push_back(std::move(p));
    }
    if (static_cast<std::int64_t>(layers.size()) != layer_count) {
        malformed(fmt::format("header declares {} layers, found {}", layer_count, layers.size()));
    }
    return layers;
}

/// Sequential reader over the .bin weight blob, mirroring ncnn's ModelBin.
class BinReader {
public:
    explicit BinReader(ByteView data) : reader_(data, ErrorCode::MalformedModel) {}

    /// Tagged weight array of `count` elements.
    WeightTensor tagged(Shape shape, WeightRole role, std::string_view layer) {
        const auto count = static_cast<std::size_t>(element_count(shape));
        const auto tag = reader_.read<std::uint32_t>();
        WeightTensor w;
        w.role = role;
        w.shape = std::move(shape);
        std::size_t width = 0;
        switch (tag) {
            case k_tag_f32: w.dtype = DType::F32; width = 4; break;
            case k_tag_f16: w.dtype = DType::F16; width = 2; break;
            case k_tag_i8: w.dtype = DType::I8; width = 1; break;
            default:
                throw Error(ErrorCode::UnsupportedFeature,
                            fmt::format("layer '{}' uses weight storage tag {:#010x}", layer, tag));
        }
        const auto bytes = reader_.read_bytes(count * width);
        w.data.assign(bytes.begin(), bytes.end());
        align4(count * width);
        return w;
    }

    /// Untagged float32 array.
    WeightTensor raw(Shape shape, WeightRole role) {
        const auto count = static_cast<std::size_t>(element_count(shape));
        WeightTensor w;
        w.role = role;
        w.shape = std::move(shape);
        w.dtype = DType::F32;
        const auto bytes = reader_.read_bytes(count * 4);
        w.data.assign(bytes.begin(), bytes.end());
        return w;
    }

    std::size_t remaining() const noexcept { return reader_.remaining(); }

private:
    void align4(std::size_t n) {
        const auto pad = (4 - n % 4) % 4;
        reader_.skip(std::min(pad, reader_.remaining()));
    }

    ByteReader reader_;
};

const std::set<std::string, std::less<>>& unsupported_weight_layers() {
    static const std::set<std::string, std::less<>> types{
        "Embed", "LSTM", "GRU", "RNN", "MultiHeadAttention", "Convolution1D", "ConvolutionDepthWise1D",
        "Convolution3D", "ConvolutionDepthWise3D", "DeconvolutionDepthWise", "Deconvolution1D",
        "Deconvolution3D", "DeconvolutionDepthWise1D", "DeconvolutionDepthWise3D", "InstanceNorm",
        "GroupNorm", "LayerNorm", "MemoryData", "Requantize", "Quantize", "Dequantize", "Gemm", "RMSNorm",
    };
    return types;
}

void conv_attrs(LayerNode& node, const ParamLine& p) {
    auto& a = node.attrs;
    const auto kw = p.i(1, 0);
    const auto kh = p.i(11, kw);
    a["out_channels"] = p.i(0, 0);
    a["kernel_w"] = kw;
    a["kernel_h"] = kh;
    a["dilation_w"] = p.i(2, 1);
    a["dilation_h"] = p.i(12, p.i(2, 1));
    a["stride_w"] = p.i(3, 1);
    a["stride_h"] = p.i(13, p.i(3, 1));
    const auto pad_left = p.i(4, 0);
    if (pad_left == -233 || pad_left == -234) {
        a["padding"] = std::string("same");
    } else {
        a["padding"] = std::string("explicit");
        a["pad_left"] = pad_left;
        a["pad_top"] = p.i(14, pad_left);
        a["pad_right"] = p.i(15, pad_left);
        a["pad_bottom"] = p.i(16, p.i(14, pad_left));
    }
    if (node.op.kind == OpKind::Conv2d) a["groups"] = p.i(7, 1);
}

void pool_attrs(LayerNode& node, const ParamLine& p) {
    auto& a = node.attrs;
    a["pool"] = std::string(p.i(0, 0) == 1 ? "avg" : "max");
    const auto kw = p.i(1, 0);
    a["kernel_w"] = kw;
    a["kernel_h"] = p.i(11, kw);
    a["stride_w"] = p.i(2, 1);
    a["stride_h"] = p.i(12, p.i(2, 1));
    if (p.i(4, 0) != 0) a["global"] = std::int64_t{1};
    const auto pad_left = p.i(3, 0);
    const auto mode = p.i(5, 0);
    if (mode == 2 || mode == 3) {
        a["padding"] = std::string("same");
        return;
    }
    a["padding"] = std::string("explicit");
    a["pad_left"] = pad_left;
    a["pad_top"] = p.i(13, pad_left);
    a["pad_right"] = p.i(14, pad_left);
    a["pad_bottom"] = p.i(15, p.i(13, pad_left));
    a["ceil_mode"] = std::int64_t{mode == 0 ? 1 : 0};
}

void add_attrs(LayerNode& node, const ParamLine& p) {
    auto& a = node.attrs;
    const auto& t = p.type;
    if (t == "Convolution" || t == "ConvolutionDepthWise" || t == "Deconvolution") {
        conv_attrs(node, p);
    } else if (t == "InnerProduct") {
        a["units"] = p.i(0, 0);
        a["flatten_axis"] = std::int64_t{1};
    } else if (t == "Pooling") {
        pool_attrs(node, p);
    } else if (t == "Concat") {
        // ncnn axes exclude the batch dimension.
        const auto axis = p.i(0, 0);
        a["axis"] = axis >= 0 ? axis + 1 : axis;
    } else if (t == "Flatten") {
        a["axis"] = std::int64_t{1};
    }
}

Shape input_shape(const ParamLine& p) {
    const auto w = p.i(0, 0);
    const auto h = p.i(1, 0);
    const auto c = p.i(2, 0);
    if (c > 0 && h > 0 && w > 0) return {1, c, h, w};
    if (h > 0 && w > 0) return {1, h, w};
    if (w > 0) return {1, w};
    return {};
}

void load_weights(LayerNode& node, const ParamLine& p, BinReader& bin) {
    const auto& t = p.type;
    if (t == "Convolution" || t == "ConvolutionDepthWise" || t == "Deconvolution") {
        const auto out = p.i(0, 0);
        const auto kw = p.i(1, 0);
        const auto kh = p.i(11, kw);
        const auto size = p.i(6, 0);
        if (out <= 0 || kw <= 0 || kh <= 0 || size <= 0 || size % (out * kh * kw) != 0) {
            malformed(fmt::format("layer '{}': weight_data_size {} does not fit {}x{}x{}", p.name, size, out, kh, kw));
        }
        node.weights.push_back(bin.tagged({out, size / (out * kh * kw), kh, kw}, WeightRole::Kernel, p.name));
        if (p.i(5, 0) != 0) node.weights.push_back(bin.raw({out}, WeightRole::Bias));
        if (p.i(8, 0) != 0) {
            const auto scales = t == "ConvolutionDepthWise" ? p.i(7, 1) : out;
            node.weights.push_back(bin.raw({scales}, WeightRole::Other));
            node.weights.push_back(bin.raw({1}, WeightRole::Other));
        }
    } else if (t == "InnerProduct") {
        const auto out = p.i(0, 0);
        const auto size = p.i(2, 0);
        if (out <= 0 || size <= 0 || size % out != 0) {
            malformed(fmt::format("layer '{}': weight_data_size {} does not fit {} outputs", p.name, size, out));
        }
        node.weights.push_back(bin.tagged({out, size / out}, WeightRole::Kernel, p.name));
        if (p.i(1, 0) != 0) node.weights.push_back(bin.raw({out}, WeightRole::Bias));
        if (p.i(8, 0) != 0) {
            node.weights.push_back(bin.raw({out}, WeightRole::Other));
            node.weights.push_back(bin.raw({1}, WeightRole::Other));
        }
    } else if (t == "BatchNorm") {
        const auto c = p.i(0, 0);
        if (c <= 0) malformed(fmt::format("layer '{}' has no channels", p.name));
        for (int k = 0; k < 4; ++k) node.weights.push_back(bin.raw({c}, WeightRole::Other));
    } else if (t == "Scale") {
        const auto n = p.i(0, 0);
        if (n == -233) return;
        if (n <= 0) malformed(fmt::format("layer '{}' has scale_data_size {}", p.name, n));
        node.weights.push_back(bin.raw({n}, WeightRole::Other));
        if (p.i(1, 0) != 0) node.weights.push_back(bin.raw({n}, WeightRole::Bias));
    } else if (t == "PReLU") {
        const auto n = p.i(0, 0);
        if (n > 0) node.weights.push_back(bin.raw({n}, WeightRole::Other));
    } else if (t == "Bias") {
        const auto n = p.i(0, 0);
        if (n > 0) node.weights.push_back(bin.raw({n}, WeightRole::Bias));
    } else if (unsupported_weight_layers().contains(t)) {
        throw Error(ErrorCode::UnsupportedFeature, fmt::format("layer '{}' of type {} carries weights in an unsupported layout", p.name, t));
    }
}

}  // namespace

ModelGraph parse_ncnn(ByteView param, std::optional<ByteView> bin, const OpTable& ops) {
    const auto lines = parse_param(as_chars(param));
    std::optional<BinReader> weights;
    if (bin) weights.emplace(*bin);

    ModelGraph g;
    g.framework = std::string(k_framework);
    g.layout = Layout::Nchw;

    std::map<std::string, NodeId> producer;
    std::map<std::string, Shape> input_blobs;
    NodeId next_id = 0;
    for (const auto& p : lines) {
        if (p.type == "Input") {
            for (const auto& top : p.tops) input_blobs[top] = input_shape(p);
            continue;
        }
        const NodeId id = next_id++;
        LayerNode node = make_node(id, p.name, ops, k_framework, p.type);
        if (weights) load_weights(node, p, *weights);
        add_attrs(node, p);
        for (std::size_t slot = 0; slot < p.bottoms.size(); ++slot) {
            const auto& bottom = p.bottoms[slot];
            if (auto it = producer.find(bottom); it != producer.end()) {
                g.edges.push_back({it->second, id, static_cast<std::int32_t>(slot)});
            } else if (auto in = input_blobs.find(bottom); in != input_blobs.end()) {
                g.inputs.push_back({id, static_cast<std::int32_t>(slot), in->second});
            } else {
                malformed(fmt::format("layer '{}' consumes undefined blob '{}'", p.name, bottom));
            }
        }
        for (const auto& top : p.tops) producer[top] = id;
        g.nodes.push_back(std::move(node));
    }
    if (g.nodes.empty()) malformed("param defines no compute layers");
    if (weights && weights->remaining() != 0) {
        malformed(fmt::format("{} trailing bytes in the weight file", weights->remaining()));
    }

    std::set<NodeId> has_successor;
    for (const auto& e : g.edges) has_successor.insert(e.from);
    for (const auto& n : g.nodes) {
        if (!has_successor.contains(n.id)) g.outputs.push_back(n.id);
    }
    return g;
}

}  // namespace prospector::detail
