// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prospector/bytes.hpp"
#include "prospector/device.hpp"
#include "prospector/energy.hpp"

namespace prospector {

struct BenchConfig {
    std::int64_t warmup_runs = 5;
    std::int64_t measured_runs = 20;
    double inter_run_sleep_ms = 50.0;
    std::int64_t batch_size = 1;
    std::int64_t threads = 1;
    std::optional<std::int64_t> affinity;  // top-core count

    friend bool operator==(const BenchConfig&, const BenchConfig&) = default;
};

/// Batch sizes swept by the batching experiments.
inline constexpr std::int64_t k_standard_batch_sizes[] = {1, 2, 5, 10, 25};

/// Throws InvalidArgument unless warmup >= 0, measured >= 1, batch >= 1,
/// threads >= 1, sleep >= 0 and affinity <= threads.
void validate(const BenchConfig& config);

struct BenchJob {
    std::string job_id;  // no whitespace
    std::string model_id;
    std::string device_id;
    BenchConfig config;
    double flops_per_sample = 0.0;  // from model_stats; drives efficiency
    Bytes payload;                  // model bytes pushed to the device
    std::string payload_name = "model.bin";
};

void validate(const BenchJob& job);

struct BenchOptions {
    std::chrono::milliseconds signal_deadline{10000};
    std::map<std::string, std::chrono::milliseconds> device_deadlines;  // overrides per device id
    std::string remote_dir = "/data/local/tmp/prospector";

    std::chrono::milliseconds deadline_for(const std::string& device_id) const;
};

struct BenchResult {
    std::string job_id;
    std::string model_id;
    std::string device_id;
    bool ok = false;
    std::optional<ErrorCode> error;
    std::string error_message;
    JobState last_state = JobState::Push;
    std::vector<JobState> states;  // host and device states in protocol order
    std::int64_t batch_size = 1;
    std::vector<double> latencies_ms;
    double energy_j = 0.0;
    double mean_power_w = 0.0;  // net of baseline, over the busy time
    double throughput_ips = 0.0;
    std::optional<double> efficiency_flops_per_j;  // empty when energy is zero
    double per_inference_energy_j = 0.0;
    double total_flops = 0.0;
    PowerTrace trace;  // not serialized; the log keeps its rate, length and baseline
    std::size_t trace_samples = 0;

    double total_latency_ms() const noexcept;
};

/// Error raised by run_job, carrying the last state the job reached.
class JobFailure : public Error {
public:
    JobFailure(ErrorCode code, const std::string& message, std::vector<JobState> states);
    JobState state() const noexcept { return states_.empty() ? JobState::Push : states_.back(); }
    const std::vector<JobState>& states() const noexcept { return states_; }

private:
    std::vector<JobState> states_;
};

/// PUSH -> ASSERT_STATE -> POWER_OFF -> (WAIT_POWER_OFF -> WARMUP -> MEASURE ->
/// SIGNAL on the device) -> POWER_ON -> COLLECT. Holds the adapter's job
/// mutex throughout. Throws JobFailure wrapping AdapterTimeout,
/// DeviceRefused, SignalLost or any other adapter error.
BenchResult run_job(const BenchJob& job, DeviceAdapter& adapter, const BenchOptions& options = {});

/// run_job with failures recorded in the result instead of thrown.
BenchResult execute_job(const BenchJob& job, DeviceAdapter& adapter, const BenchOptions& options = {});

/// Runs devices concurrently and each device's jobs in order. Results come
/// back sorted by job id. Throws InvalidArgument for an unknown device id or
/// a duplicate job id.
std::vector<BenchResult> run_jobs(const std::vector<BenchJob>& jobs,
                                  const std::map<std::string, DeviceAdapter*>& adapters,
                                  const BenchOptions& options = {});

/// One canonical JSON object per line, no trailing whitespace.
std::string to_json_line(const BenchResult& result);
/// Inverse of to_json_line; the trace comes back without samples.
BenchResult bench_result_from_json(std::string_view line);

std::string to_jsonl(const std::vector<BenchResult>& results);
std::vector<BenchResult> parse_jsonl(std::string_view text);

/// Rewrites `path` with the results sorted by job id.
void write_results_log(const std::filesystem::path& path, std::vector<BenchResult> results);
std::vector<BenchResult> read_results_log(const std::filesystem::path& path);

}  // namespace prospector
