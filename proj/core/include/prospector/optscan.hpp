// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prospector/corpus.hpp"
#include "prospector/ir.hpp"
#include "prospector/tables.hpp"

namespace prospector {

inline constexpr std::string_view k_cluster_prefix = "cluster_";
inline constexpr std::string_view k_prune_prefix = "prune_";
inline constexpr double k_sparsity_epsilon = 1e-9;

struct MarkedLayers {
    bool present = false;
    std::vector<std::string> layers;
    friend bool operator==(const MarkedLayers&, const MarkedLayers&) = default;
};

struct QuantizationInfo {
    std::int64_t dequantize_layers = 0;
    double int8_weight_fraction = 0.0;
    bool int8_activation = false;
    friend bool operator==(const QuantizationInfo&, const QuantizationInfo&) = default;
};

struct OptimizationReport {
    std::string model_id;
    MarkedLayers clustering;
    MarkedLayers pruning;
    QuantizationInfo quantization;
    std::optional<double> sparsity;  // empty for weightless graphs

    friend bool operator==(const OptimizationReport&, const OptimizationReport&) = default;
};

/// Clustering and pruning are flagged by a "cluster_"/"prune_" prefix on the
/// node name or on any '/'-separated component of it. int8_weight_fraction
/// counts i8 and u8 scalars. int8_activation holds when a conv, depthwise,
/// dense or rnn node with an integer output dtype has a quantize ancestor and
/// a dequantize descendant.
OptimizationReport scan_optimizations(const ModelGraph& graph);

/// True when `name` or one of its '/'-separated components starts with `prefix`.
bool has_layer_prefix(std::string_view name, std::string_view prefix) noexcept;

enum class HitSource { DexStrings, NativeLib };
std::string_view to_string(HitSource source) noexcept;

struct ApiHit {
    std::string package_id;
    ApiVendor vendor = ApiVendor::GoogleFirebase;
    std::string matched_string;  // the pattern from the vendor table
    HitSource source = HitSource::DexStrings;
    std::string entry;  // first archive entry (by name) carrying the match

    friend bool operator==(const ApiHit&, const ApiHit&) = default;
};

/// Case-sensitive substring matching of every vendor pattern against dex
/// string pools and, when `scan_native` is set, the raw bytes of native
/// libraries. One hit per (vendor, pattern), sorted. Dex entries that fail
/// to parse are skipped with a warning.
std::vector<ApiHit> scan_cloud_apis(const AppPackage& pkg, const ApiPatternTable& patterns = ApiPatternTable::builtin(),
                                    bool scan_native = true);

struct NativeLibHit {
    FrameworkId framework;
    std::string entry;
    friend auto operator<=>(const NativeLibHit&, const NativeLibHit&) = default;
};

/// Native libraries whose base name starts with a known library prefix.
std::vector<NativeLibHit> scan_native_libs(const AppPackage& pkg, const NativeLibTable& table = NativeLibTable::builtin());

}  // namespace prospector
