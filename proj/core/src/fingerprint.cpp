// SPDX-License-Identifier: Apache-2.0
#include "prospector/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "prospector/digest.hpp"

namespace prospector {

namespace {

std::string attr_text(const AttrValue& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::int64_t>) return fmt::format("i{}", x);
            else if constexpr (std::is_same_v<T, double>) return fmt::format("f{}", x);
            else if constexpr (std::is_same_v<T, std::string>) return fmt::format("s{}:{}", x.size(), x);
            else return fmt::format("l[{}]", fmt::join(x, ","));
        },
        v);
}

std::string structure_text(const ModelGraph& g, const std::vector<NodeId>& order) {
    std::string out = fmt::format("framework {}\nlayout {}\n", g.framework, to_string(g.layout));
    for (NodeId id : order) {
        const auto& n = *g.find_node(id);
        out += fmt::format("node {} {}:{} {}\n", n.id, n.name.size(), n.name, n.op.str());
        for (const auto& [k, v] : n.attrs) out += fmt::format(" attr {} {}\n", k, attr_text(v));
        for (const auto& w : n.weights) {
            out += fmt::format(" weight {} {} [{}] {}\n", to_string(w.role), to_string(w.dtype), fmt::join(w.shape, ","),
                               w.data.size());
        }
    }
    for (const auto& e : g.edges) out += fmt::format("edge {} {} {}\n", e.from, e.to, e.slot);
    for (const auto& in : g.inputs) out += fmt::format("input {} {} [{}]\n", in.node, in.slot, fmt::join(in.shape, ","));
    out += fmt::format("outputs [{}]\n", fmt::join(g.outputs, ","));
    return out;
}

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = (h >> 15) & 1U;
    const std::uint32_t exp = (h >> 10) & 0x1FU;
    const std::uint32_t mant = h & 0x3FFU;
    float value;
    if (exp == 0) {
        value = std::ldexp(static_cast<float>(mant), -24);
    } else if (exp == 31) {
        value = mant == 0 ? INFINITY : NAN;
    } else {
        value = std::ldexp(static_cast<float>(mant | 0x400U), static_cast<int>(exp) - 25);
    }
    return sign ? -value : value;
}

}  // namespace

std::int64_t FingerprintRecord::total_params() const noexcept {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.params;
    return n;
}

FingerprintRecord fingerprint(const ModelGraph& graph) {
    const auto order = topological_order(graph);
    FingerprintRecord rec;
    rec.model_id = graph.model_id;
    Sha256 whole;
    whole.update(structure_text(graph, order));
    for (NodeId id : order) {
        const auto& n = *graph.find_node(id);
        Sha256 layer;
        for (const auto& w : n.weights) {
            layer.update(w.data);
            whole.update(w.data);
        }
        rec.layers.push_back({id, n.param_count(), layer.hex_digest()});
    }
    rec.whole_digest = whole.hex_digest();
    return rec;
}

std::string_view to_string(SharingVerdict verdict) noexcept {
    switch (verdict) {
        case SharingVerdict::Duplicate: return "duplicate";
        case SharingVerdict::FineTuned: return "fine_tuned";
        case SharingVerdict::Related: return "related";
        case SharingVerdict::Unrelated: return "unrelated";
    }
    return "?";
}

SharingReport compare(const FingerprintRecord& a, const FingerprintRecord& b) {
    SharingReport r;
    r.model_a = a.model_id;
    r.model_b = b.model_id;
    const auto total_a = a.total_params();
    const auto total_b = b.total_params();
    if (a.whole_digest == b.whole_digest) {
        r.shared_params = total_a;
        r.shared_param_fraction_a = 1.0;
        r.shared_param_fraction_b = 1.0;
        r.verdict = SharingVerdict::Duplicate;
        return r;
    }

    std::map<std::pair<std::string_view, std::int64_t>, std::int64_t> available;
    std::int64_t weighted_b = 0;
    for (const auto& l : b.layers) {
        if (l.params == 0) continue;
        ++available[{l.digest, l.params}];
        ++weighted_b;
    }
    std::int64_t weighted_a = 0;
    std::int64_t matched = 0;
    for (const auto& l : a.layers) {
        if (l.params == 0) continue;
        ++weighted_a;
        auto it = available.find({l.digest, l.params});
        if (it != available.end() && it->second > 0) {
            --it->second;
            ++matched;
            r.shared_params += l.params;
        }
    }
    r.shared_param_fraction_a = total_a > 0 ? static_cast<double>(r.shared_params) / static_cast<double>(total_a) : 0.0;
    r.shared_param_fraction_b = total_b > 0 ? static_cast<double>(r.shared_params) / static_cast<double>(total_b) : 0.0;
    r.differing_layer_count = std::max(weighted_a - matched, weighted_b - matched);

    if (r.shared_params > 0 && r.differing_layer_count <= k_fine_tune_max_layers) {
        r.verdict = SharingVerdict::FineTuned;
    } else if (std::max(r.shared_param_fraction_a, r.shared_param_fraction_b) >= k_related_fraction) {
        r.verdict = SharingVerdict::Related;
    } else {
        r.verdict = SharingVerdict::Unrelated;
    }
    return r;
}

UniquenessReport corpus_uniqueness(const std::vector<FingerprintRecord>& records) {
    UniquenessReport u;
    u.total_models = static_cast<std::int64_t>(records.size());
    std::map<std::string, const FingerprintRecord*> representative;
    for (const auto& r : records) {
        u.clusters[r.whole_digest].push_back(r.model_id);
        auto& rep = representative[r.whole_digest];
        if (rep == nullptr || r.model_id < rep->model_id) rep = &r;
    }
    for (auto& [digest, ids] : u.clusters) std::sort(ids.begin(), ids.end());
    u.unique_count = static_cast<std::int64_t>(u.clusters.size());

    std::vector<const FingerprintRecord*> reps;
    for (const auto& [digest, rec] : representative) reps.push_back(rec);

    // Only pairs sharing a weighted layer can share weights.
    std::map<std::pair<std::string, std::int64_t>, std::set<std::size_t>> index;
    for (std::size_t i = 0; i < reps.size(); ++i) {
        for (const auto& l : reps[i]->layers) {
            if (l.params > 0) index[{l.digest, l.params}].insert(i);
        }
    }
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& [key, members] : index) {
        for (auto i = members.begin(); i != members.end(); ++i) {
            for (auto j = std::next(i); j != members.end(); ++j) pairs.emplace(*i, *j);
        }
    }
    std::vector<bool> shared(reps.size(), false);
    std::vector<bool> tuned(reps.size(), false);
    for (const auto& [i, j] : pairs) {
        const auto r = compare(*reps[i], *reps[j]);
        if (r.shared_param_fraction_a >= k_related_fraction) shared[i] = true;
        if (r.shared_param_fraction_b >= k_related_fraction) shared[j] = true;
        if (r.verdict == SharingVerdict::FineTuned) tuned[i] = tuned[j] = true;
    }
    u.shared_20_count = std::count(shared.begin(), shared.end(), true);
    u.fine_tuned_count = std::count(tuned.begin(), tuned.end(), true);
    if (!reps.empty()) {
        const auto n = static_cast<double>(reps.size());
        u.shared_20_fraction = static_cast<double>(u.shared_20_count) / n;
        u.fine_tuned_fraction = static_cast<double>(u.fine_tuned_count) / n;
    }
    return u;
}

double weight_sparsity(const ModelGraph& graph, double epsilon) {
    if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("epsilon {} must be >= 0", epsilon));
    std::int64_t total = 0;
    std::int64_t near_zero = 0;
    for (const auto& node : graph.nodes) {
        for (const auto& w : node.weights) {
            const auto count = w.param_count();
            if (count == 0) continue;
            total += count;
            const auto* p = w.data.data();
            switch (w.dtype) {
                case DType::F32:
                    for (std::int64_t i = 0; i < count; ++i) near_zero += std::fabs(load_le<float>(p + 4 * i)) <= epsilon;
                    break;
                case DType::F16:
                    for (std::int64_t i = 0; i < count; ++i) {
                        near_zero += std::fabs(half_to_float(load_le<std::uint16_t>(p + 2 * i))) <= epsilon;
                    }
                    break;
                default: {
                    const auto width = w.data.size() / static_cast<std::size_t>(count);
                    for (std::int64_t i = 0; i < count; ++i) {
                        const auto* e = p + static_cast<std::size_t>(i) * width;
                        near_zero += std::all_of(e, e + width, [](std::uint8_t b) { return b == 0; });
                    }
                    break;
                }
            }
        }
    }
    if (total == 0) throw Error(ErrorCode::NoWeights, "graph has no weights");
    return static_cast<double>(near_zero) / static_cast<double>(total);
}

}  // namespace prospector
