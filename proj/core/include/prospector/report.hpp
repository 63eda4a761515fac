// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prospector/energy.hpp"
#include "prospector/fingerprint.hpp"
#include "prospector/optscan.hpp"
#include "prospector/orchestrator.hpp"

namespace prospector {

inline constexpr int k_report_schema_version = 1;
inline constexpr std::string_view k_uncategorized = "uncategorized";

/// Named sections of an exported report, in export order.
inline constexpr std::string_view k_section_totals = "table2_totals";
inline constexpr std::string_view k_section_layers = "fig4_layer_histograms";
inline constexpr std::string_view k_section_flops_by_task = "fig9_flops_params_by_task";
inline constexpr std::string_view k_section_latency = "fig5_latency_ecdf";
inline constexpr std::string_view k_section_energy = "fig8_energy_power_efficiency";
inline constexpr std::string_view k_section_tasks = "table4_task_table";
inline constexpr std::string_view k_section_scenarios = "table5_scenarios";
inline constexpr std::string_view k_section_diff = "fig7_snapshot_diff";
inline constexpr std::string_view k_section_cloud = "fig10_cloud_apis";
inline constexpr std::string_view k_section_optimizations = "optimization_summary";

inline constexpr std::string_view k_all_sections[] = {
    k_section_totals, k_section_layers, k_section_flops_by_task, k_section_latency, k_section_energy,
    k_section_tasks,  k_section_scenarios, k_section_diff,        k_section_cloud,   k_section_optimizations,
};

// ---------------------------------------------------------------------------
// ECDF

struct Ecdf {
    std::vector<std::pair<double, double>> points;  // (value, cumulative fraction)
    friend bool operator==(const Ecdf&, const Ecdf&) = default;
};

/// Duplicates collapse into one point; the last fraction is exactly 1.0.
/// Throws EmptyInput, or InvalidArgument for NaN values.
Ecdf ecdf(std::vector<double> values);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Per-item inputs produced by the analysis stages

struct PackageSummary {
    std::string package_id;
    std::string category;  // empty means uncategorized
    std::vector<FrameworkId> native_frameworks;
    std::vector<ApiHit> api_hits;
};

/// One model file (or file pair) found in one package.
struct ModelSummary {
    std::string package_id;
    std::string entry;
    FrameworkId framework;
    std::string model_id;  // content hash of the model files
    std::string digest;    // structural fingerprint when parsed, model_id otherwise
    bool parsed = false;
    std::int64_t macs = 0;
    std::int64_t flops = 0;
    std::int64_t params = 0;
    std::map<std::string, std::int64_t> layer_histogram;
    std::optional<OptimizationReport> optimization;
    std::optional<std::string> task;
    std::optional<std::string> modality;
};

// ---------------------------------------------------------------------------
// CorpusReport

struct ReportParameters {
    double battery_voltage_v = k_default_battery_voltage_v;
    double audio_window_s = k_default_audio_window_s;
    std::map<std::string, double> device_voltage_v;  // per-device override
    friend bool operator==(const ReportParameters&, const ReportParameters&) = default;
};

struct Totals {
    std::int64_t apps = 0;
    std::int64_t apps_with_frameworks = 0;
    std::int64_t apps_with_models = 0;
    std::int64_t total_models = 0;
    std::int64_t unique_models = 0;
    std::int64_t shared_20_models = 0;   // among unique parsed models
    std::int64_t fine_tuned_models = 0;  // among unique parsed models
    std::int64_t parsed_unique_models = 0;
    friend bool operator==(const Totals&, const Totals&) = default;
};

struct FrameworkRow {
    std::int64_t apps = 0;
    std::int64_t models = 0;
    friend bool operator==(const FrameworkRow&, const FrameworkRow&) = default;
};

struct CategoryRow {
    std::int64_t apps = 0;
    std::int64_t apps_with_models = 0;
    std::int64_t models = 0;
    std::set<std::string> model_digests;
    friend bool operator==(const CategoryRow&, const CategoryRow&) = default;
};

struct ModelPoint {
    std::string model_id;
    std::int64_t flops = 0;
    std::int64_t params = 0;
    friend auto operator<=>(const ModelPoint&, const ModelPoint&) = default;
};

struct TaskRow {
    std::int64_t models = 0;
    std::int64_t apps = 0;
    std::vector<ModelPoint> points;  // unique parsed models, sorted
    friend bool operator==(const TaskRow&, const TaskRow&) = default;
};

struct BenchRow {
    std::string device_id;
    std::string job_id;
    std::string model_id;
    double mean_latency_ms = 0.0;
    double per_inference_energy_j = 0.0;
    double mean_power_w = 0.0;
    std::optional<double> efficiency_flops_per_j;
    double total_flops = 0.0;
    friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct DeviceBench {
    std::int64_t jobs = 0;
    std::int64_t failed = 0;
    std::vector<BenchRow> rows;  // successful jobs, sorted by job id
    friend bool operator==(const DeviceBench&, const DeviceBench&) = default;
};

struct VendorRow {
    std::int64_t apps = 0;
    std::map<std::string, std::int64_t> pattern_apps;
    friend bool operator==(const VendorRow&, const VendorRow&) = default;
};

struct CloudSummary {
    std::int64_t apps_with_cloud_api = 0;
    std::int64_t apps_with_cloud_and_models = 0;
    std::map<std::string, VendorRow> vendors;
    friend bool operator==(const CloudSummary&, const CloudSummary&) = default;
};

struct OptimizationSummary {
    std::int64_t models = 0;  // unique parsed models
    std::int64_t clustering = 0;
    std::int64_t pruning = 0;
    std::int64_t dequantize = 0;
    std::int64_t int8_weights = 0;
    std::int64_t int8_activation = 0;
    std::vector<double> sparsity;  // sorted
    friend bool operator==(const OptimizationSummary&, const OptimizationSummary&) = default;
};

struct DiffRow {
    std::string category;
    std::int64_t additions = 0;
    std::int64_t removals = 0;
    friend bool operator==(const DiffRow&, const DiffRow&) = default;
};

struct SnapshotDiff {
    std::string baseline_label;
    std::vector<DiffRow> rows;
    friend bool operator==(const SnapshotDiff&, const SnapshotDiff&) = default;
};

/// Counts only; fractions, ECDFs, medians and scenario discharge are
/// rendered from them on export.
struct CorpusReport {
    std::string snapshot_label;
    ReportParameters parameters;
    Totals totals;
    std::map<std::string, FrameworkRow> per_framework;
    std::map<std::string, CategoryRow> per_category;
    std::map<std::string, std::map<std::string, std::int64_t>> layer_counts;  // modality -> category -> nodes
    std::map<std::string, TaskRow> tasks;
    CloudSummary cloud;
    OptimizationSummary optimizations;
    std::optional<std::map<std::string, DeviceBench>> bench;  // absent without a bench stage
    std::optional<SnapshotDiff> snapshot_diff;               // absent without a baseline

    friend bool operator==(const CorpusReport&, const CorpusReport&) = default;
};

struct ReportInputs {
    std::string snapshot_label;
    ReportParameters parameters;
    std::vector<PackageSummary> packages;
    std::vector<ModelSummary> models;
    std::vector<FingerprintRecord> fingerprints;  // one per parsed model id
    std::optional<std::vector<BenchResult>> bench;
    std::optional<CorpusReport> baseline;
};

/// Pure fold over the inputs; invariant under their order.
CorpusReport build_report(const ReportInputs& inputs);

/// Per category: additions = digests in `b` not in `a`, removals the
/// converse. Sorted by additions - removals descending, then category.
std::vector<DiffRow> diff_snapshots(const CorpusReport& a, const CorpusReport& b);

/// Discharge per (scenario, device) from the median per-inference energy.
struct ScenarioRow {
    std::string scenario;
    std::string device_id;
    std::int64_t inference_count = 0;
    double median_energy_j = 0.0;
    double discharge_mah = 0.0;
};
std::vector<ScenarioRow> scenario_table(const CorpusReport& report);

// ---------------------------------------------------------------------------
// Export

enum class ExportFormat { Json, Csv };

/// Throws UnsupportedFormat.
ExportFormat export_format_from_string(std::string_view name);

/// Canonical JSON: sorted keys, two-space indent, trailing newline.
std::string export_json(const CorpusReport& report);

/// One CSV per table, keyed by file name. Bench files are omitted without a
/// bench stage and the diff file without a baseline.
std::map<std::string, std::string> export_csv(const CorpusReport& report);

/// File name -> contents; "report.json" for Json.
std::map<std::string, std::string> export_report(const CorpusReport& report, ExportFormat format);

/// Inverse of export_json. Throws UnsupportedFormat for another
/// schema_version and Io for malformed documents.
CorpusReport import_report(std::string_view json_text);

/// Section names present in an exported JSON document.
std::vector<std::string> report_sections(std::string_view json_text);

}  // namespace prospector
