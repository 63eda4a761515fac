// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "prospector/bytes.hpp"
#include "prospector/energy.hpp"

namespace prospector {

/// Host-side states of a benchmark job followed by the device-side states the
/// runner reports back. Order matches the protocol.
enum class JobState {
    Push,
    AssertState,
    PowerOff,
    WaitPowerOff,
    Warmup,
    Measure,
    Signal,
    PowerOn,
    Collect,
};

std::string_view to_string(JobState state) noexcept;
std::optional<JobState> job_state_from_string(std::string_view text) noexcept;

struct PushFile {
    std::string remote_path;
    Bytes data;
};

struct DeviceStatus {
    bool ready = false;
    std::string detail;
};

/// Listens on 127.0.0.1 (ephemeral port) for "DONE <job_id>\n" lines.
class CompletionServer {
public:
    static constexpr std::chrono::milliseconds k_poll_interval{10};

    CompletionServer();
    ~CompletionServer();
    CompletionServer(const CompletionServer&) = delete;
    CompletionServer& operator=(const CompletionServer&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    std::string endpoint() const;

    /// Returns once "DONE <job_id>" has arrived, including lines received
    /// before the call. A non-positive deadline fails without waiting.
    /// Throws SignalLost.
    void await(const std::string& job_id, std::chrono::milliseconds deadline);

    /// Every line received so far, in arrival order.
    std::vector<std::string> received() const;

private:
    void accept_one(std::chrono::milliseconds timeout);

    int fd_ = -1;
    std::uint16_t port_ = 0;
    mutable std::mutex mu_;
    std::vector<std::string> lines_;
    std::set<std::string> done_;
};

/// Netcat-equivalent client: connects to "host:port" and writes one
/// "DONE <job_id>\n" line. Throws Io.
void send_completion(const std::string& endpoint, const std::string& job_id);

/// Benchmark target. A job runs exec'd runner code on the device which waits
/// for USB power to drop, benchmarks, writes its result file and signals the
/// host over TCP. The power monitor trace covers the MEASURE window.
class DeviceAdapter {
public:
    virtual ~DeviceAdapter() = default;

    virtual std::string device_id() const = 0;
    virtual DeviceStatus status() = 0;
    virtual void push(const std::vector<PushFile>& files) = 0;
    /// Starts `command` on the device and returns without waiting for it.
    virtual void exec(const std::string& command) = 0;
    virtual void set_power(bool on) = 0;
    /// Throws SignalLost.
    virtual void await_signal(const std::string& job_id, std::chrono::milliseconds deadline) = 0;
    /// Throws EntryNotFound for a missing remote path.
    virtual std::map<std::string, Bytes> pull(const std::vector<std::string>& paths) = 0;
    virtual PowerTrace collect_trace() = 0;
    /// Stops any runner still in flight and restores USB power.
    virtual void reset() = 0;
    /// Host endpoint the runner signals, "127.0.0.1:<port>".
    virtual std::string signal_endpoint() const = 0;

    /// Held by the orchestrator for the whole job.
    std::mutex& job_mutex() noexcept { return job_mutex_; }

private:
    std::mutex job_mutex_;
};

/// Runner invocation understood by the simulator and by the on-device runner.
struct RunnerCommand {
    std::string job_id;
    std::string model_path;
    std::string result_path;
    std::int64_t warmup_runs = 0;
    std::int64_t measured_runs = 1;
    double inter_run_sleep_ms = 0.0;
    std::int64_t batch_size = 1;
    std::int64_t threads = 1;
    std::optional<std::int64_t> affinity;
    double flops_per_sample = 0.0;
    std::string signal_endpoint;

    std::string str() const;
    /// Throws InvalidArgument.
    static RunnerCommand parse(const std::string& command);
};

inline constexpr std::string_view k_runner_binary = "prospector-runner";

struct SimulatedProfile {
    std::string device_id = "sim0";
    double latency_a_ms_per_flop = 0.0;
    double latency_b_ms = 10.0;
    double power_w = 2.0;  // draw above baseline while inferring
    double baseline_w = 0.5;
    double jitter = 0.0;  // relative, uniform in [-jitter, +jitter]
    std::uint64_t seed = 0;
    double sample_rate_hz = k_default_sample_rate_hz;
    bool never_signal = false;
    bool refuse = false;
    std::optional<JobState> stall_in;  // adapter op of this host state times out
    std::chrono::milliseconds power_off_wait{30000};
};

/// Deterministic stand-in for a phone on a power monitor. Time is virtual:
/// latency = b + a * FLOPs * batch per run, scaled by seeded jitter, and the
/// trace is synthesized at the profile sample rate. The completion signal
/// goes over a real local TCP connection.
class SimulatedDevice final : public DeviceAdapter {
public:
    explicit SimulatedDevice(SimulatedProfile profile);
    ~SimulatedDevice() override;

    const SimulatedProfile& profile() const noexcept { return profile_; }
    const CompletionServer& server() const noexcept { return server_; }

    std::string device_id() const override { return profile_.device_id; }
    DeviceStatus status() override;
    void push(const std::vector<PushFile>& files) override;
    void exec(const std::string& command) override;
    void set_power(bool on) override;
    void await_signal(const std::string& job_id, std::chrono::milliseconds deadline) override;
    std::map<std::string, Bytes> pull(const std::vector<std::string>& paths) override;
    PowerTrace collect_trace() override;
    void reset() override;
    std::string signal_endpoint() const override { return server_.endpoint(); }

    /// Per-run latency in ms for the given job, before any clamping.
    static std::vector<double> draw_latencies(const SimulatedProfile& profile, const RunnerCommand& cmd,
                                              std::int64_t count, std::uint64_t stream);

private:
    void run(RunnerCommand cmd);
    void join_runner();
    void stall_if(JobState state) const;

    SimulatedProfile profile_;
    CompletionServer server_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool powered_ = true;
    bool power_dropped_ = false;  // latched by set_power(false) until the next exec
    bool cancelled_ = false;
    std::map<std::string, Bytes> files_;
    std::optional<PowerTrace> trace_;
    std::thread runner_;
};

/// Runs a host shell command line and returns its exit status.
using ShellRunner = std::function<int(const std::string&)>;

/// Real-device adapter over a shell transport such as "adb -s SERIAL".
/// Power control and tracing need an external power monitor and throw
/// UnsupportedFeature.
class ShellDevice final : public DeviceAdapter {
public:
    ShellDevice(std::string device_id, std::string transport, ShellRunner runner = {});

    std::string device_id() const override { return device_id_; }
    DeviceStatus status() override;
    void push(const std::vector<PushFile>& files) override;
    void exec(const std::string& command) override;
    void set_power(bool on) override;
    void await_signal(const std::string& job_id, std::chrono::milliseconds deadline) override;
    std::map<std::string, Bytes> pull(const std::vector<std::string>& paths) override;
    PowerTrace collect_trace() override;
    void reset() override;
    std::string signal_endpoint() const override { return server_.endpoint(); }

private:
    void run_or_throw(const std::string& command, JobState state);

    std::string device_id_;
    std::string transport_;
    ShellRunner runner_;
    CompletionServer server_;
};

}  // namespace prospector
