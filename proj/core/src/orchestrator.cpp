// SPDX-License-Identifier: Apache-2.0
#include "prospector/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace prospector {

namespace {

using nlohmann::json;

std::vector<JobState> parse_states(const json& arr) {
    std::vector<JobState> out;
    for (const auto& s : arr) {
        auto state = job_state_from_string(s.get<std::string>());
        if (!state) throw Error(ErrorCode::Io, fmt::format("unknown job state '{}'", s.get<std::string>()));
        out.push_back(*state);
    }
    return out;
}

/// Device-side states from a runner result file; empty when unreadable.
std::vector<JobState> device_states(const Bytes& result_file) {
    try {
        const auto doc = json::parse(result_file.begin(), result_file.end());
        return parse_states(doc.at("states"));
    } catch (const std::exception&) {
        return {};
    }
}

void reduce(BenchResult& r, const BenchJob& job) {
    const double total_ms = r.total_latency_ms();
    const double runs = static_cast<double>(job.config.measured_runs);
    const double batch = static_cast<double>(job.config.batch_size);
    r.batch_size = job.config.batch_size;
    r.energy_j = integrate_energy(r.trace);
    r.trace_samples = r.trace.samples.size();
    r.total_flops = job.flops_per_sample * batch * runs;
    r.throughput_ips = total_ms > 0.0 ? batch * runs / (total_ms / 1000.0) : 0.0;
    r.mean_power_w = total_ms > 0.0 ? r.energy_j / (total_ms / 1000.0) : 0.0;
    r.per_inference_energy_j = r.energy_j / (batch * runs);
    r.efficiency_flops_per_j.reset();
    if (r.energy_j > 0.0) r.efficiency_flops_per_j = efficiency(r.total_flops, r.energy_j);
}

}  // namespace

void validate(const BenchConfig& c) {
    auto bad = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); };
    if (c.warmup_runs < 0) bad(fmt::format("warmup_runs {} < 0", c.warmup_runs));
    if (c.measured_runs < 1) bad(fmt::format("measured_runs {} < 1", c.measured_runs));
    if (c.batch_size < 1) bad(fmt::format("batch_size {} < 1", c.batch_size));
    if (c.threads < 1) bad(fmt::format("threads {} < 1", c.threads));
    if (!(c.inter_run_sleep_ms >= 0.0)) bad(fmt::format("inter_run_sleep_ms {} < 0", c.inter_run_sleep_ms));
    if (c.affinity && (*c.affinity < 1 || *c.affinity > c.threads)) {
        bad(fmt::format("affinity {} outside [1, threads={}]", *c.affinity, c.threads));
    }
}

void validate(const BenchJob& job) {
    validate(job.config);
    auto token_ok = [](const std::string& s) {
        return !s.empty() && std::none_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) || c == '/'; });
    };
    if (!token_ok(job.job_id)) throw Error(ErrorCode::InvalidArgument, fmt::format("bad job id '{}'", job.job_id));
    if (!token_ok(job.payload_name)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("bad payload name '{}'", job.payload_name));
    }
    if (!(job.flops_per_sample >= 0.0)) throw Error(ErrorCode::InvalidArgument, "flops_per_sample < 0");
}

std::chrono::milliseconds BenchOptions::deadline_for(const std::string& device_id) const {
    auto it = device_deadlines.find(device_id);
    return it == device_deadlines.end() ? signal_deadline : it->second;
}

double BenchResult::total_latency_ms() const noexcept {
    return std::accumulate(latencies_ms.begin(), latencies_ms.end(), 0.0);
}

JobFailure::JobFailure(ErrorCode code, const std::string& message, std::vector<JobState> states)
    : Error(code, message), states_(std::move(states)) {}

BenchResult run_job(const BenchJob& job, DeviceAdapter& adapter, const BenchOptions& options) {
    validate(job);
    if (adapter.device_id() != job.device_id) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("job {} targets {}, adapter is {}", job.job_id, job.device_id, adapter.device_id()));
    }
    std::lock_guard job_lock(adapter.job_mutex());

    const auto dir = fmt::format("{}/{}", options.remote_dir, job.job_id);
    RunnerCommand cmd;
    cmd.job_id = job.job_id;
    cmd.model_path = fmt::format("{}/{}", dir, job.payload_name);
    cmd.result_path = fmt::format("{}/result.json", dir);
    cmd.warmup_runs = job.config.warmup_runs;
    cmd.measured_runs = job.config.measured_runs;
    cmd.inter_run_sleep_ms = job.config.inter_run_sleep_ms;
    cmd.batch_size = job.config.batch_size;
    cmd.threads = job.config.threads;
    cmd.affinity = job.config.affinity;
    cmd.flops_per_sample = job.flops_per_sample;
    cmd.signal_endpoint = adapter.signal_endpoint();

    std::vector<JobState> states;
    auto enter = [&](JobState s) {
        states.push_back(s);
        spdlog::debug("{} on {}: {}", job.job_id, job.device_id, to_string(s));
    };

    BenchResult r;
    r.job_id = job.job_id;
    r.model_id = job.model_id;
    r.device_id = job.device_id;
    r.batch_size = job.config.batch_size;
    try {
        enter(JobState::Push);
        adapter.push({{cmd.model_path, job.payload}});

        enter(JobState::AssertState);
        const auto status = adapter.status();
        if (!status.ready) {
            throw Error(ErrorCode::DeviceRefused, fmt::format("{} not ready: {}", job.device_id, status.detail));
        }
        adapter.exec(cmd.str());

        enter(JobState::PowerOff);
        adapter.set_power(false);
        try {
            adapter.await_signal(job.job_id, options.deadline_for(job.device_id));
        } catch (const Error& lost) {
            // Restore power and learn how far the runner got before giving up.
            try {
                adapter.set_power(true);
                const auto files = adapter.pull({cmd.result_path});
                const auto dev = device_states(files.at(cmd.result_path));
                states.insert(states.end(), dev.begin(), dev.end());
            } catch (const Error&) {
            }
            try {
                adapter.reset();
            } catch (const Error&) {
            }
            throw JobFailure(lost.code(), lost.what(), states);
        }

        enter(JobState::PowerOn);
        adapter.set_power(true);

        enter(JobState::Collect);
        const auto files = adapter.pull({cmd.result_path});
        const auto& raw = files.at(cmd.result_path);
        json doc;
        try {
            doc = json::parse(raw.begin(), raw.end());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Io, fmt::format("unreadable runner result: {}", e.what()));
        }
        if (doc.contains("error")) {
            throw Error(ErrorCode::Io, fmt::format("runner failed: {}", doc["error"].get<std::string>()));
        }
        try {
            r.latencies_ms = doc.at("latencies_ms").get<std::vector<double>>();
            const auto dev = parse_states(doc.at("states"));
            // Splice the device-side states between POWER_OFF and POWER_ON.
            states.insert(states.end() - 2, dev.begin(), dev.end());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Io, fmt::format("runner result lacks fields: {}", e.what()));
        }
        if (static_cast<std::int64_t>(r.latencies_ms.size()) != job.config.measured_runs) {
            throw Error(ErrorCode::Io, fmt::format("runner returned {} latencies, expected {}", r.latencies_ms.size(),
                                                   job.config.measured_runs));
        }
        r.trace = adapter.collect_trace();
        reduce(r, job);
    } catch (const JobFailure&) {
        throw;
    } catch (const Error& e) {
        try {
            adapter.reset();
        } catch (const Error&) {
        }
        throw JobFailure(e.code(), e.what(), states);
    }
    r.ok = true;
    r.states = std::move(states);
    r.last_state = r.states.back();
    return r;
}

BenchResult execute_job(const BenchJob& job, DeviceAdapter& adapter, const BenchOptions& options) {
    try {
        return run_job(job, adapter, options);
    } catch (const Error& e) {
        BenchResult r;
        r.job_id = job.job_id;
        r.model_id = job.model_id;
        r.device_id = job.device_id;
        r.batch_size = job.config.batch_size;
        r.ok = false;
        r.error = e.code();
        r.error_message = e.what();
        if (const auto* f = dynamic_cast<const JobFailure*>(&e)) r.states = f->states();
        r.last_state = r.states.empty() ? JobState::Push : r.states.back();
        spdlog::warn("job {} failed in {}: {}", job.job_id, to_string(r.last_state), e.what());
        return r;
    }
}

std::vector<BenchResult> run_jobs(const std::vector<BenchJob>& jobs,
                                  const std::map<std::string, DeviceAdapter*>& adapters, const BenchOptions& options) {
    std::map<std::string, std::vector<const BenchJob*>> per_device;
    std::set<std::string> ids;
    for (const auto& job : jobs) {
        if (!ids.insert(job.job_id).second) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("duplicate job id '{}'", job.job_id));
        }
        auto it = adapters.find(job.device_id);
        if (it == adapters.end() || it->second == nullptr) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("job {}: unknown device '{}'", job.job_id, job.device_id));
        }
        per_device[job.device_id].push_back(&job);
    }

    std::mutex mu;
    std::condition_variable cv;
    std::deque<BenchResult> queue;
    std::vector<std::thread> workers;
    workers.reserve(per_device.size());
    for (const auto& [device, list] : per_device) {
        DeviceAdapter* adapter = adapters.at(device);
        workers.emplace_back([&, adapter, list = list] {
            for (const auto* job : list) {
                auto result = execute_job(*job, *adapter, options);
                {
                    std::lock_guard lock(mu);
                    queue.push_back(std::move(result));
                }
                cv.notify_one();
            }
        });
    }

    std::vector<BenchResult> results;
    results.reserve(jobs.size());
    while (results.size() < jobs.size()) {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return !queue.empty(); });
        results.push_back(std::move(queue.front()));
        queue.pop_front();
    }
    for (auto& w : workers) w.join();
    std::sort(results.begin(), results.end(),
              [](const BenchResult& a, const BenchResult& b) { return a.job_id < b.job_id; });
    return results;
}

std::string to_json_line(const BenchResult& r) {
    json states = json::array();
    for (auto s : r.states) states.push_back(to_string(s));
    json j{{"job_id", r.job_id},
           {"model_id", r.model_id},
           {"device_id", r.device_id},
           {"status", r.ok ? "ok" : "failed"},
           {"error", r.error ? json(std::string(to_string(*r.error))) : json(nullptr)},
           {"message", r.error_message},
           {"state", to_string(r.last_state)},
           {"states", states},
           {"batch_size", r.batch_size},
           {"latencies_ms", r.latencies_ms},
           {"energy_j", r.energy_j},
           {"mean_power_w", r.mean_power_w},
           {"throughput_ips", r.throughput_ips},
           {"efficiency_flops_per_j", r.efficiency_flops_per_j ? json(*r.efficiency_flops_per_j) : json(nullptr)},
           {"per_inference_energy_j", r.per_inference_energy_j},
           {"total_flops", r.total_flops},
           {"trace", {{"sample_rate_hz", r.trace.sample_rate_hz},
                      {"samples", r.trace_samples},
                      {"baseline_w", r.trace.baseline_w}}}};
    return j.dump();
}

BenchResult bench_result_from_json(std::string_view line) {
    try {
        const auto j = json::parse(line);
        BenchResult r;
        r.job_id = j.at("job_id").get<std::string>();
        r.model_id = j.at("model_id").get<std::string>();
        r.device_id = j.at("device_id").get<std::string>();
        r.ok = j.at("status").get<std::string>() == "ok";
        if (!j.at("error").is_null()) {
            r.error = error_code_from_string(j["error"].get<std::string>());
            if (!r.error) throw Error(ErrorCode::Io, fmt::format("unknown error code '{}'", j["error"].get<std::string>()));
        }
        r.error_message = j.at("message").get<std::string>();
        auto last = job_state_from_string(j.at("state").get<std::string>());
        if (!last) throw Error(ErrorCode::Io, "unknown last state");
        r.last_state = *last;
        r.states = parse_states(j.at("states"));
        r.batch_size = j.at("batch_size").get<std::int64_t>();
        r.latencies_ms = j.at("latencies_ms").get<std::vector<double>>();
        r.energy_j = j.at("energy_j").get<double>();
        r.mean_power_w = j.at("mean_power_w").get<double>();
        r.throughput_ips = j.at("throughput_ips").get<double>();
        if (!j.at("efficiency_flops_per_j").is_null()) r.efficiency_flops_per_j = j["efficiency_flops_per_j"].get<double>();
        r.per_inference_energy_j = j.at("per_inference_energy_j").get<double>();
        r.total_flops = j.at("total_flops").get<double>();
        const auto& t = j.at("trace");
        r.trace.sample_rate_hz = t.at("sample_rate_hz").get<double>();
        r.trace.baseline_w = t.at("baseline_w").get<double>();
        r.trace_samples = t.at("samples").get<std::size_t>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Io, fmt::format("bad results line: {}", e.what()));
    }
}

std::string to_jsonl(const std::vector<BenchResult>& results) {
    std::string out;
    for (const auto& r : results) {
        out += to_json_line(r);
        out += '\n';
    }
    return out;
}

std::vector<BenchResult> parse_jsonl(std::string_view text) {
    std::vector<BenchResult> out;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = text.substr(0, nl);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) out.push_back(bench_result_from_json(line));
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
    return out;
}

void write_results_log(const std::filesystem::path& path, std::vector<BenchResult> results) {
    std::sort(results.begin(), results.end(),
              [](const BenchResult& a, const BenchResult& b) { return a.job_id < b.job_id; });
    write_file(path, std::string_view(to_jsonl(results)));
}

std::vector<BenchResult> read_results_log(const std::filesystem::path& path) {
    return parse_jsonl(read_text_file(path));
}

}  // namespace prospector
