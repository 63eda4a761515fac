// SPDX-License-Identifier: Apache-2.0
#include "prospector/native_format.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <json.hpp>

#include "prospector/digest.hpp"

namespace prospector {

namespace {

using nlohmann::json;

class SchemaReader {
public:
    explicit SchemaReader(std::optional<std::filesystem::path> base_dir) : base_dir_(std::move(base_dir)) {}

    [[noreturn]] static void violation(const std::string& path, const std::string& what) {
        throw Error(ErrorCode::SchemaViolation, fmt::format("{}: {}", path.empty() ? "/" : path, what));
    }

    static const json& field(const json& obj, const std::string& path, const char* key) {
        if (!obj.is_object()) violation(path, "expected an object");
        auto it = obj.find(key);
        if (it == obj.end()) violation(path + "/" + key, "required field is missing");
        return *it;
    }

    static std::int64_t integer(const json& v, const std::string& path) {
        if (!v.is_number_integer()) violation(path, "expected an integer");
        return v.get<std::int64_t>();
    }

    static std::string string(const json& v, const std::string& path) {
        if (!v.is_string()) violation(path, "expected a string");
        return v.get<std::string>();
    }

    static Shape shape(const json& v, const std::string& path) {
        if (!v.is_array()) violation(path, "expected an array of dimensions");
        Shape out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto d = integer(v[i], fmt::format("{}/{}", path, i));
            if (d < 1) violation(fmt::format("{}/{}", path, i), "dimensions must be >= 1");
            out.push_back(d);
        }
        return out;
    }

    static AttrValue attr(const json& v, const std::string& path) {
        if (v.is_boolean()) return std::int64_t{v.get<bool>() ? 1 : 0};
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) return v.get<double>();
        if (v.is_string()) return v.get<std::string>();
        if (v.is_array()) {
            std::vector<std::int64_t> out;
            for (std::size_t i = 0; i < v.size(); ++i) out.push_back(integer(v[i], fmt::format("{}/{}", path, i)));
            return out;
        }
        violation(path, "attribute must be a number, string, boolean or integer list");
    }

    WeightTensor weight(const json& w, const std::string& path) const {
        WeightTensor t;
        const auto role = string(field(w, path, "role"), path + "/role");
        auto r = weight_role_from_string(role);
        if (!r) violation(path + "/role", "unknown role '" + role + "'");
        t.role = *r;
        t.shape = shape(field(w, path, "shape"), path + "/shape");
        const auto dtype = string(field(w, path, "dtype"), path + "/dtype");
        auto d = dtype_from_string(dtype);
        if (!d) violation(path + "/dtype", "unknown dtype '" + dtype + "'");
        t.dtype = *d;

        const std::size_t width = dtype_size(t.dtype);
        if (w.contains("data")) {
            try {
                t.data = base64_decode(string(w["data"], path + "/data"));
            } catch (const Error& e) {
                if (e.code() == ErrorCode::SchemaViolation) throw;
                violation(path + "/data", e.what());
            }
        } else if (w.contains("file")) {
            const auto rel = string(w["file"], path + "/file");
            if (!base_dir_) violation(path + "/file", "external weights need a base directory");
            const auto offset = w.contains("offset") ? integer(w["offset"], path + "/offset") : 0;
            if (width == 0) violation(path + "/dtype", "external weights need a sized dtype");
            const auto length = static_cast<std::size_t>(element_count(t.shape)) * width;
            Bytes all;
            try {
                all = read_file(*base_dir_ / rel);
            } catch (const Error& e) {
                violation(path + "/file", e.what());
            }
            if (offset < 0 || static_cast<std::size_t>(offset) + length > all.size()) {
                violation(path + "/offset", fmt::format("range [{}, +{}) exceeds {}-byte file", offset, length, all.size()));
            }
            t.data.assign(all.begin() + offset, all.begin() + offset + static_cast<std::ptrdiff_t>(length));
        } else {
            violation(path, "weight needs 'data' or 'file'");
        }
        const auto count = static_cast<std::size_t>(element_count(t.shape));
        const bool ok = width != 0 ? t.data.size() == count * width : t.data.size() % count == 0;
        if (!ok) {
            violation(path + "/data", fmt::format("{} bytes do not match shape with {} {} elements",
                                                  t.data.size(), count, dtype));
        }
        return t;
    }

    ModelGraph graph(const json& doc) const {
        if (!doc.is_object()) violation("", "document must be an object");
        if (doc.contains("schema") && doc["schema"] != k_native_schema) {
            violation("/schema", fmt::format("unsupported schema '{}'", doc["schema"].dump()));
        }
        ModelGraph g;
        g.framework = string(field(doc, "", "framework"), "/framework");
        if (doc.contains("model_id")) g.model_id = string(doc["model_id"], "/model_id");
        if (doc.contains("layout")) {
            const auto layout = string(doc["layout"], "/layout");
            if (layout == "nchw") g.layout = Layout::Nchw;
            else if (layout == "nhwc") g.layout = Layout::Nhwc;
            else violation("/layout", "expected 'nchw' or 'nhwc'");
        }
        if (doc.contains("metadata")) {
            const auto& md = doc["metadata"];
            if (!md.is_object()) violation("/metadata", "expected an object");
            for (const auto& [k, v] : md.items()) g.metadata[k] = string(v, "/metadata/" + k);
        }

        const auto& nodes = field(doc, "", "nodes");
        if (!nodes.is_array()) violation("/nodes", "expected an array");
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto path = fmt::format("/nodes/{}", i);
            const auto& nj = nodes[i];
            LayerNode n;
            const auto id = integer(field(nj, path, "id"), path + "/id");
            if (id < 0 || id > std::numeric_limits<NodeId>::max()) violation(path + "/id", "id out of range");
            n.id = static_cast<NodeId>(id);
            n.name = nj.contains("name") ? string(nj["name"], path + "/name") : std::string{};
            const auto op = string(field(nj, path, "op"), path + "/op");
            auto kind = op_kind_from_string(op);
            if (!kind) violation(path + "/op", "unknown op '" + op + "'");
            n.op.kind = *kind;
            if (*kind == OpKind::Other) n.op.tag = string(field(nj, path, "tag"), path + "/tag");
            if (nj.contains("attrs")) {
                const auto& aj = nj["attrs"];
                if (!aj.is_object()) violation(path + "/attrs", "expected an object");
                for (const auto& [k, v] : aj.items()) n.attrs[k] = attr(v, path + "/attrs/" + k);
            }
            if (nj.contains("weights")) {
                const auto& wj = nj["weights"];
                if (!wj.is_array()) violation(path + "/weights", "expected an array");
                for (std::size_t k = 0; k < wj.size(); ++k) {
                    n.weights.push_back(weight(wj[k], fmt::format("{}/weights/{}", path, k)));
                }
            }
            if (n.op.kind == OpKind::Conv2d || n.op.kind == OpKind::DepthwiseConv2d) {
                for (auto key : {"kernel_h", "kernel_w", "stride_h", "stride_w"}) {
                    if (!attr_int(n.attrs, key)) violation(path + "/attrs/" + key, "required for " + op);
                }
            }
            g.nodes.push_back(std::move(n));
        }
        std::stable_sort(g.nodes.begin(), g.nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        for (std::size_t i = 1; i < g.nodes.size(); ++i) {
            if (g.nodes[i].id == g.nodes[i - 1].id) violation("/nodes", fmt::format("duplicate node id {}", g.nodes[i].id));
        }

        auto node_ref = [&](const json& v, const std::string& path) {
            const auto id = integer(v, path);
            if (id < 0 || id > std::numeric_limits<NodeId>::max() || !g.find_node(static_cast<NodeId>(id))) {
                violation(path, fmt::format("node {} does not exist", id));
            }
            return static_cast<NodeId>(id);
        };

        const auto& edges = field(doc, "", "edges");
        if (!edges.is_array()) violation("/edges", "expected an array");
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto path = fmt::format("/edges/{}", i);
            Edge e;
            e.from = node_ref(field(edges[i], path, "from"), path + "/from");
            e.to = node_ref(field(edges[i], path, "to"), path + "/to");
            if (edges[i].contains("slot")) {
                const auto slot = integer(edges[i]["slot"], path + "/slot");
                if (slot < 0 || slot > 65535) violation(path + "/slot", "slot out of range");
                e.slot = static_cast<std::int32_t>(slot);
            }
            g.edges.push_back(e);
        }

        const auto& inputs = field(doc, "", "inputs");
        if (!inputs.is_array() || inputs.empty()) violation("/inputs", "expected a non-empty array");
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto path = fmt::format("/inputs/{}", i);
            GraphInput in;
            in.node = node_ref(field(inputs[i], path, "node"), path + "/node");
            if (inputs[i].contains("slot")) {
                const auto slot = integer(inputs[i]["slot"], path + "/slot");
                if (slot < 0 || slot > 65535) violation(path + "/slot", "slot out of range");
                in.slot = static_cast<std::int32_t>(slot);
            }
            in.shape = shape(field(inputs[i], path, "shape"), path + "/shape");
            g.inputs.push_back(std::move(in));
        }

        const auto& outputs = field(doc, "", "outputs");
        if (!outputs.is_array() || outputs.empty()) violation("/outputs", "expected a non-empty array");
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            g.outputs.push_back(node_ref(outputs[i], fmt::format("/outputs/{}", i)));
        }
        return g;
    }

private:
    std::optional<std::filesystem::path> base_dir_;
};

json attr_to_json(const AttrValue& v) {
    return std::visit([](const auto& x) { return json(x); }, v);
}

}  // namespace

ModelGraph load_native(ByteView json_bytes, const std::optional<std::filesystem::path>& base_dir) {
    json doc;
    try {
        doc = json::parse(as_chars(json_bytes));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaViolation, fmt::format("/: not valid JSON ({})", e.what()));
    }
    ModelGraph g = SchemaReader(base_dir).graph(doc);
    if (g.model_id.empty()) g.model_id = sha256_hex(json_bytes);
    return g;
}

std::string save_native(const ModelGraph& graph) {
    json doc;
    doc["schema"] = k_native_schema;
    doc["model_id"] = graph.model_id;
    doc["framework"] = graph.framework;
    doc["layout"] = to_string(graph.layout);
    if (!graph.metadata.empty()) doc["metadata"] = graph.metadata;

    std::vector<const LayerNode*> nodes;
    for (const auto& n : graph.nodes) nodes.push_back(&n);
    std::stable_sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->id < b->id; });

    json jnodes = json::array();
    for (const auto* n : nodes) {
        json jn;
        jn["id"] = n->id;
        jn["name"] = n->name;
        jn["op"] = to_string(n->op.kind);
        if (n->op.kind == OpKind::Other) jn["tag"] = n->op.tag;
        if (!n->attrs.empty()) {
            json ja = json::object();
            for (const auto& [k, v] : n->attrs) ja[k] = attr_to_json(v);
            jn["attrs"] = std::move(ja);
        }
        if (!n->weights.empty()) {
            json jw = json::array();
            for (const auto& w : n->weights) {
                jw.push_back({{"role", to_string(w.role)},
                              {"shape", w.shape},
                              {"dtype", to_string(w.dtype)},
                              {"data", base64_encode(w.data)}});
            }
            jn["weights"] = std::move(jw);
        }
        jnodes.push_back(std::move(jn));
    }
    doc["nodes"] = std::move(jnodes);

    json jedges = json::array();
    for (const auto& e : graph.edges) jedges.push_back({{"from", e.from}, {"to", e.to}, {"slot", e.slot}});
    doc["edges"] = std::move(jedges);

    json jinputs = json::array();
    for (const auto& in : graph.inputs) {
        jinputs.push_back({{"node", in.node}, {"slot", in.slot}, {"shape", in.shape}});
    }
    doc["inputs"] = std::move(jinputs);
    doc["outputs"] = graph.outputs;
    return doc.dump(2) + "\n";
}

}  // namespace prospector
