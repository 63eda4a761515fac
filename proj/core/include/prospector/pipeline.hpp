// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prospector/device.hpp"
#include "prospector/orchestrator.hpp"
#include "prospector/report.hpp"
#include "prospector/tables.hpp"

namespace prospector {

/// Environment variable holding the log level (trace, debug, info, warn,
/// error, critical, off). Defaults to info.
inline constexpr const char* k_log_level_env = "PROSPECTOR_LOG_LEVEL";

/// Applies k_log_level_env to the default spdlog logger. Throws Config for
/// an unknown level name.
void configure_logging_from_env();

enum class Stage { Scan, Analyze, Bench, Report };
std::string_view to_string(Stage stage) noexcept;
std::optional<Stage> stage_from_string(std::string_view text) noexcept;

struct RunManifest {
    std::filesystem::path corpus;
    std::filesystem::path out;
    std::vector<Stage> stages;
    std::optional<std::filesystem::path> config_path;
    std::int64_t jobs = 1;
};

/// Throws InvalidArgument for jobs < 1 and Io when `out` cannot be created.
void validate(const RunManifest& manifest);

struct DeviceProfile {
    std::string device_id;
    std::string kind = "simulator";  // simulator | shell
    SimulatedProfile simulator;
    std::string transport;  // shell: e.g. "adb -s SERIAL"
    std::chrono::milliseconds signal_deadline{10000};
    double battery_voltage_v = k_default_battery_voltage_v;
};

/// Parsed --config file. Every field has a default, so an absent file is a
/// valid configuration.
struct RunConfig {
    FormatTable formats = FormatTable::builtin();
    OpTable ops = OpTable::builtin();
    ApiPatternTable api_patterns = ApiPatternTable::builtin();
    NativeLibTable native_libs = NativeLibTable::builtin();
    std::string tables_tag = "builtin";  // part of the analysis cache key

    bool scan_native_libs_for_apis = true;
    std::optional<std::filesystem::path> annotations;
    std::optional<std::string> snapshot_label;
    std::optional<std::filesystem::path> baseline_snapshot;  // an earlier --out directory
    double audio_window_s = k_default_audio_window_s;
    double battery_voltage_v = k_default_battery_voltage_v;

    BenchConfig bench;
    std::string remote_dir = "/data/local/tmp/prospector";
    std::vector<DeviceProfile> devices;  // defaults to one simulator
};

/// Relative paths inside the config resolve against the config's directory.
/// Throws Config.
RunConfig load_config(const std::optional<std::filesystem::path>& path);
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);

/// Stage output files under --out.
namespace out_files {
inline constexpr const char* inventory = "inventory.json";
inline constexpr const char* models = "models.json";
inline constexpr const char* fingerprints = "fingerprints.json";
inline constexpr const char* bench_results = "bench_results.jsonl";
inline constexpr const char* report_dir = "report";
inline constexpr const char* cache_dir = "cache";
}  // namespace out_files

struct ScanSummary {
    std::int64_t packages = 0;
    std::int64_t failed_packages = 0;
    std::int64_t candidates = 0;
    std::int64_t valid = 0;
};

struct AnalyzeSummary {
    std::int64_t models = 0;      // model instances
    std::int64_t parsed = 0;      // instances whose graph parsed
    std::int64_t analyzed = 0;    // unique models analyzed this run
    std::int64_t cache_hits = 0;  // unique models served from the cache
    std::int64_t failures = 0;    // unique models that failed to parse
};

struct BenchSummary {
    std::int64_t jobs = 0;
    std::int64_t failed = 0;
};

struct ReportSummary {
    std::vector<std::string> sections;
    std::vector<std::string> files;
};

/// Throws Io when the corpus directory is unreadable. Packages that fail to
/// open are recorded with their error.
ScanSummary cmd_scan(const RunManifest& manifest, const RunConfig& config);

/// Needs the inventory. Per-model failures are logged and recorded.
AnalyzeSummary cmd_analyze(const RunManifest& manifest, const RunConfig& config);

/// Benchmarks every parsed unique model on every configured device and
/// rewrites the results log.
BenchSummary cmd_bench(const RunManifest& manifest, const RunConfig& config);

/// Missing stage outputs drop their sections with a warning.
ReportSummary cmd_report(const RunManifest& manifest, const RunConfig& config);

/// Runs the manifest's stages in protocol order.
void run_pipeline(const RunManifest& manifest, const RunConfig& config);

}  // namespace prospector
