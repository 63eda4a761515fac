// SPDX-License-Identifier: Apache-2.0
#include "prospector/optscan.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "prospector/dex.hpp"
#include "prospector/fingerprint.hpp"

namespace prospector {

namespace {

bool is_compute(OpKind kind) {
    return kind == OpKind::Conv2d || kind == OpKind::DepthwiseConv2d || kind == OpKind::Dense || kind == OpKind::Rnn;
}

bool integer_output(const LayerNode& node) {
    const auto dtype = attr_string(node.attrs, "out_dtype");
    if (!dtype) return false;
    const auto d = dtype_from_string(*dtype);
    return d && is_integer(*d);
}

/// Nodes reachable from `start` along `adjacency`, excluding `start`.
std::set<NodeId> reachable(NodeId start, const std::map<NodeId, std::vector<NodeId>>& adjacency) {
    std::set<NodeId> seen;
    std::vector<NodeId> stack{start};
    while (!stack.empty()) {
        const auto id = stack.back();
        stack.pop_back();
        auto it = adjacency.find(id);
        if (it == adjacency.end()) continue;
        for (auto next : it->second) {
            if (seen.insert(next).second) stack.push_back(next);
        }
    }
    return seen;
}

bool int8_activation(const ModelGraph& g) {
    std::map<NodeId, std::vector<NodeId>> succ;
    std::map<NodeId, std::vector<NodeId>> pred;
    for (const auto& e : g.edges) {
        succ[e.from].push_back(e.to);
        pred[e.to].push_back(e.from);
    }
    auto any_of_kind = [&](const std::set<NodeId>& ids, OpKind kind) {
        return std::any_of(ids.begin(), ids.end(), [&](NodeId id) { return g.find_node(id)->op.kind == kind; });
    };
    for (const auto& n : g.nodes) {
        if (!is_compute(n.op.kind) || !integer_output(n)) continue;
        if (any_of_kind(reachable(n.id, pred), OpKind::Quantize) && any_of_kind(reachable(n.id, succ), OpKind::Dequantize)) {
            return true;
        }
    }
    return false;
}

std::string base_name(std::string_view entry) {
    const auto slash = entry.rfind('/');
    return std::string(slash == std::string_view::npos ? entry : entry.substr(slash + 1));
}

}  // namespace

bool has_layer_prefix(std::string_view name, std::string_view prefix) noexcept {
    std::size_t start = 0;
    while (start <= name.size()) {
        const auto slash = name.find('/', start);
        const auto part = name.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
        if (part.starts_with(prefix)) return true;
        if (slash == std::string_view::npos) break;
        start = slash + 1;
    }
    return false;
}

OptimizationReport scan_optimizations(const ModelGraph& graph) {
    OptimizationReport r;
    r.model_id = graph.model_id;
    std::int64_t total = 0;
    std::int64_t int8 = 0;
    for (const auto& n : graph.nodes) {
        if (has_layer_prefix(n.name, k_cluster_prefix)) r.clustering.layers.push_back(n.name);
        if (has_layer_prefix(n.name, k_prune_prefix)) r.pruning.layers.push_back(n.name);
        if (n.op.kind == OpKind::Dequantize) ++r.quantization.dequantize_layers;
        for (const auto& w : n.weights) {
            total += w.param_count();
            if (w.dtype == DType::I8 || w.dtype == DType::U8) int8 += w.param_count();
        }
    }
    r.clustering.present = !r.clustering.layers.empty();
    r.pruning.present = !r.pruning.layers.empty();
    if (total > 0) {
        r.quantization.int8_weight_fraction = static_cast<double>(int8) / static_cast<double>(total);
        r.sparsity = weight_sparsity(graph, k_sparsity_epsilon);
    }
    r.quantization.int8_activation = int8_activation(graph);
    return r;
}

std::string_view to_string(HitSource source) noexcept {
    return source == HitSource::DexStrings ? "dex_strings" : "native_lib";
}

std::vector<ApiHit> scan_cloud_apis(const AppPackage& pkg, const ApiPatternTable& patterns, bool scan_native) {
    std::map<std::pair<ApiVendor, std::string>, ApiHit> hits;
    auto record = [&](ApiVendor vendor, const std::string& pattern, HitSource source, const std::string& entry) {
        auto [it, inserted] = hits.try_emplace({vendor, pattern});
        auto& hit = it->second;
        if (inserted) {
            hit = ApiHit{pkg.id, vendor, pattern, source, entry};
        } else if (std::tie(source, entry) < std::tie(hit.source, hit.entry)) {
            hit.source = source;
            hit.entry = entry;
        }
    };

    for (const auto& e : pkg.entries) {
        if (e.kind == EntryKind::Dex) {
            std::vector<std::string> strings;
            try {
                strings = extract_dex_strings(extract_entry(pkg, e.name));
            } catch (const Error& err) {
                spdlog::warn("{}: skipping {}: {}", pkg.id, e.name, err.what());
                continue;
            }
            for (const auto& [vendor, list] : patterns.patterns()) {
                for (const auto& pattern : list) {
                    const bool found = std::any_of(strings.begin(), strings.end(), [&](const std::string& s) {
                        return s.find(pattern) != std::string::npos;
                    });
                    if (found) record(vendor, pattern, HitSource::DexStrings, e.name);
                }
            }
        } else if (e.kind == EntryKind::NativeLib && scan_native) {
            Bytes lib;
            try {
                lib = extract_entry(pkg, e.name);
            } catch (const Error& err) {
                spdlog::warn("{}: skipping {}: {}", pkg.id, e.name, err.what());
                continue;
            }
            const auto text = as_chars(lib);
            for (const auto& [vendor, list] : patterns.patterns()) {
                for (const auto& pattern : list) {
                    const std::boyer_moore_horspool_searcher searcher(pattern.begin(), pattern.end());
                    if (std::search(text.begin(), text.end(), searcher) != text.end()) {
                        record(vendor, pattern, HitSource::NativeLib, e.name);
                    }
                }
            }
        }
    }
    std::vector<ApiHit> out;
    for (auto& [key, hit] : hits) out.push_back(std::move(hit));
    return out;
}

std::vector<NativeLibHit> scan_native_libs(const AppPackage& pkg, const NativeLibTable& table) {
    std::vector<NativeLibHit> out;
    for (const auto& e : pkg.entries) {
        if (e.kind != EntryKind::NativeLib) continue;
        if (auto fw = table.match(base_name(e.name))) out.push_back({*fw, e.name});
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace prospector
