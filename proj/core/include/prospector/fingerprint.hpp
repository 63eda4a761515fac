// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prospector/ir.hpp"

namespace prospector {

struct LayerDigest {
    NodeId node = 0;
    std::int64_t params = 0;
    std::string digest;  // SHA-256 of the node's weight bytes in order
    friend bool operator==(const LayerDigest&, const LayerDigest&) = default;
};

/// Content fingerprint of one model. All digests are SHA-256 hex strings.
struct FingerprintRecord {
    std::string model_id;
    std::string whole_digest;
    std::vector<LayerDigest> layers;  // topological order

    std::int64_t total_params() const noexcept;
    friend bool operator==(const FingerprintRecord&, const FingerprintRecord&) = default;
};

/// whole_digest covers the canonical graph structure (framework, layout,
/// node names, ops, attrs, weight roles/shapes/dtypes, edges, inputs and
/// outputs) followed by every weight payload in topological order.
/// model_id and metadata are excluded.
FingerprintRecord fingerprint(const ModelGraph& graph);

enum class SharingVerdict { Duplicate, FineTuned, Related, Unrelated };
std::string_view to_string(SharingVerdict verdict) noexcept;

/// Fraction of weights two models share before they count as related.
inline constexpr double k_related_fraction = 0.20;
/// Most weighted layers a fine-tuned copy may change.
inline constexpr std::int64_t k_fine_tune_max_layers = 3;

struct SharingReport {
    std::string model_a;
    std::string model_b;
    std::int64_t shared_params = 0;
    double shared_param_fraction_a = 0.0;
    double shared_param_fraction_b = 0.0;
    /// Unmatched weighted layers on the side with more of them.
    std::int64_t differing_layer_count = 0;
    SharingVerdict verdict = SharingVerdict::Unrelated;
};

/// Layers match on (digest, params); each layer is matched at most once,
/// walking `a` in topological order. Zero-parameter layers never count as
/// differing. fine_tuned needs some shared weights and at most
/// k_fine_tune_max_layers differing layers; related needs a fraction of at
/// least k_related_fraction on either side.
SharingReport compare(const FingerprintRecord& a, const FingerprintRecord& b);

struct UniquenessReport {
    std::int64_t total_models = 0;
    std::int64_t unique_count = 0;
    std::map<std::string, std::vector<std::string>> clusters;  // whole digest -> sorted model ids
    /// Counts over deduplicated models (one representative per cluster, the
    /// smallest model id).
    std::int64_t shared_20_count = 0;
    std::int64_t fine_tuned_count = 0;
    double shared_20_fraction = 0.0;
    double fine_tuned_fraction = 0.0;
};

/// Independent of input order. A model counts towards shared_20 when it
/// shares at least k_related_fraction of its own parameters with another
/// unique model, and towards fine_tuned when some pair verdict is fine_tuned.
UniquenessReport corpus_uniqueness(const std::vector<FingerprintRecord>& records);

/// Fraction of weight scalars with |w| <= epsilon. Integer weights count when
/// exactly zero. Throws NoWeights for a parameterless graph and
/// InvalidArgument for a negative epsilon.
double weight_sparsity(const ModelGraph& graph, double epsilon = 1e-9);

}  // namespace prospector
