// SPDX-License-Identifier: Apache-2.0
#include "prospector/device.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "prospector/digest.hpp"

namespace prospector {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::array<std::pair<JobState, std::string_view>, 9> k_state_names{{
    {JobState::Push, "PUSH"},
    {JobState::AssertState, "ASSERT_STATE"},
    {JobState::PowerOff, "POWER_OFF"},
    {JobState::WaitPowerOff, "WAIT_POWER_OFF"},
    {JobState::Warmup, "WARMUP"},
    {JobState::Measure, "MEASURE"},
    {JobState::Signal, "SIGNAL"},
    {JobState::PowerOn, "POWER_ON"},
    {JobState::Collect, "COLLECT"},
}};

[[noreturn]] void io_error(const std::string& what) {
    throw Error(ErrorCode::Io, fmt::format("{}: {}", what, std::strerror(errno)));
}

class Fd {
public:
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() {
        if (fd_ >= 0) ::close(fd_);
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    int get() const noexcept { return fd_; }

private:
    int fd_;
};

std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string shell_quote(std::string_view arg) {
    std::string out = "'";
    for (char c : arg) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    out += '\'';
    return out;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (errno != 0 || end == value.c_str() || *end != '\0') {
        throw Error(ErrorCode::InvalidArgument, fmt::format("runner option {}: '{}' is not an integer", key, value));
    }
    return v;
}

double parse_real(const std::string& key, const std::string& value) {
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(value.c_str(), &end);
    if (errno != 0 || end == value.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("runner option {}: '{}' is not a number", key, value));
    }
    return v;
}

}  // namespace

std::string_view to_string(JobState state) noexcept {
    for (const auto& [s, name] : k_state_names) {
        if (s == state) return name;
    }
    return "?";
}

std::optional<JobState> job_state_from_string(std::string_view text) noexcept {
    for (const auto& [s, name] : k_state_names) {
        if (name == text) return s;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// CompletionServer

CompletionServer::CompletionServer() {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) io_error("socket");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 16) != 0) {
        const int saved = errno;
        ::close(fd_);
        errno = saved;
        io_error("completion server bind");
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

CompletionServer::~CompletionServer() {
    if (fd_ >= 0) ::close(fd_);
}

std::string CompletionServer::endpoint() const { return fmt::format("127.0.0.1:{}", port_); }

std::vector<std::string> CompletionServer::received() const {
    std::lock_guard lock(mu_);
    return lines_;
}

void CompletionServer::accept_one(std::chrono::milliseconds timeout) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (ready <= 0) return;
    const int conn = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (conn < 0) return;
    Fd guard(conn);

    std::string buffer;
    const auto give_up = Clock::now() + std::chrono::seconds(1);
    while (buffer.size() < 4096) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(give_up - Clock::now());
        if (left.count() <= 0) break;
        pollfd cfd{conn, POLLIN, 0};
        if (::poll(&cfd, 1, static_cast<int>(left.count())) <= 0) break;
        char chunk[512];
        const auto n = ::read(conn, chunk, sizeof chunk);
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
    }

    std::lock_guard lock(mu_);
    std::istringstream lines(buffer);
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        lines_.push_back(line);
        if (line.starts_with("DONE ")) done_.insert(line.substr(5));
    }
}

void CompletionServer::await(const std::string& job_id, std::chrono::milliseconds deadline) {
    auto lost = [&] {
        return Error(ErrorCode::SignalLost, fmt::format("no DONE {} within {} ms", job_id, deadline.count()));
    };
    if (deadline.count() <= 0) throw lost();
    const auto end = Clock::now() + deadline;
    for (;;) {
        {
            std::lock_guard lock(mu_);
            if (done_.count(job_id) != 0) return;
        }
        const auto now = Clock::now();
        if (now >= end) throw lost();
        auto left = std::chrono::ceil<std::chrono::milliseconds>(end - now);
        accept_one(std::min(left, k_poll_interval));
    }
}

void send_completion(const std::string& endpoint, const std::string& job_id) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("endpoint '{}' lacks a port", endpoint));
    }
    const auto host = endpoint.substr(0, colon);
    const auto port = parse_int("--signal", endpoint.substr(colon + 1));
    if (port <= 0 || port > 65535) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("endpoint '{}' has a bad port", endpoint));
    }
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("endpoint host '{}' is not an IPv4 address", host));
    }
    Fd sock(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (sock.get() < 0) io_error("socket");
    if (::connect(sock.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        io_error(fmt::format("connect {}", endpoint));
    }
    const auto line = fmt::format("DONE {}\n", job_id);
    std::size_t sent = 0;
    while (sent < line.size()) {
        const auto n = ::send(sock.get(), line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) io_error(fmt::format("send to {}", endpoint));
        sent += static_cast<std::size_t>(n);
    }
    ::shutdown(sock.get(), SHUT_WR);
}

// ---------------------------------------------------------------------------
// RunnerCommand

std::string RunnerCommand::str() const {
    std::string out = fmt::format("{} --job {} --model {} --out {} --warmup {} --runs {} --sleep-ms {} --batch {} --threads {}",
                                  k_runner_binary, job_id, model_path, result_path, warmup_runs, measured_runs,
                                  inter_run_sleep_ms, batch_size, threads);
    if (affinity) out += fmt::format(" --affinity {}", *affinity);
    out += fmt::format(" --flops {} --signal {}", flops_per_sample, signal_endpoint);
    return out;
}

RunnerCommand RunnerCommand::parse(const std::string& command) {
    std::istringstream in(command);
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    if (tokens.empty() || tokens.front() != k_runner_binary) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("not a runner command: '{}'", command));
    }
    if (tokens.size() % 2 == 0) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("runner option '{}' lacks a value", tokens.back()));
    }
    RunnerCommand cmd;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < tokens.size(); i += 2) {
        const auto& key = tokens[i];
        const auto& value = tokens[i + 1];
        if (!seen.insert(key).second) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("runner option {} repeated", key));
        }
        if (key == "--job") {
            cmd.job_id = value;
        } else if (key == "--model") {
            cmd.model_path = value;
        } else if (key == "--out") {
            cmd.result_path = value;
        } else if (key == "--warmup") {
            cmd.warmup_runs = parse_int(key, value);
        } else if (key == "--runs") {
            cmd.measured_runs = parse_int(key, value);
        } else if (key == "--sleep-ms") {
            cmd.inter_run_sleep_ms = parse_real(key, value);
        } else if (key == "--batch") {
            cmd.batch_size = parse_int(key, value);
        } else if (key == "--threads") {
            cmd.threads = parse_int(key, value);
        } else if (key == "--affinity") {
            cmd.affinity = parse_int(key, value);
        } else if (key == "--flops") {
            cmd.flops_per_sample = parse_real(key, value);
        } else if (key == "--signal") {
            cmd.signal_endpoint = value;
        } else {
            throw Error(ErrorCode::InvalidArgument, fmt::format("unknown runner option {}", key));
        }
    }
    for (const char* required : {"--job", "--model", "--out", "--signal"}) {
        if (seen.count(required) == 0) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("runner command lacks {}", required));
        }
    }
    if (cmd.warmup_runs < 0 || cmd.measured_runs < 1 || cmd.batch_size < 1 || cmd.threads < 1 ||
        cmd.inter_run_sleep_ms < 0.0 || cmd.flops_per_sample < 0.0) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("runner command out of range: '{}'", command));
    }
    return cmd;
}

// ---------------------------------------------------------------------------
// SimulatedDevice

SimulatedDevice::SimulatedDevice(SimulatedProfile profile) : profile_(std::move(profile)) {
    const auto& p = profile_;
    if (p.latency_a_ms_per_flop < 0.0 || p.latency_b_ms < 0.0 || p.power_w < 0.0 || p.baseline_w < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "simulated latency and power terms must be non-negative");
    }
    if (p.jitter < 0.0 || p.jitter >= 1.0) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("jitter {} must lie in [0, 1)", p.jitter));
    }
    if (!(p.sample_rate_hz > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("sample rate {} Hz must be positive", p.sample_rate_hz));
    }
}

SimulatedDevice::~SimulatedDevice() {
    try {
        reset();
    } catch (...) {
    }
}

void SimulatedDevice::stall_if(JobState state) const {
    if (profile_.stall_in == state) {
        throw Error(ErrorCode::AdapterTimeout, fmt::format("{}: adapter timed out in {}", profile_.device_id, to_string(state)));
    }
}

DeviceStatus SimulatedDevice::status() {
    if (profile_.refuse) return {false, "screen locked"};
    std::lock_guard lock(mu_);
    if (runner_.joinable()) return {false, "runner still active"};
    return {true, "idle"};
}

void SimulatedDevice::push(const std::vector<PushFile>& files) {
    stall_if(JobState::Push);
    std::lock_guard lock(mu_);
    for (const auto& f : files) files_[f.remote_path] = f.data;
}

void SimulatedDevice::exec(const std::string& command) {
    stall_if(JobState::AssertState);
    auto cmd = RunnerCommand::parse(command);
    std::lock_guard lock(mu_);
    if (runner_.joinable()) throw Error(ErrorCode::DeviceRefused, fmt::format("{}: runner already active", profile_.device_id));
    if (files_.count(cmd.model_path) == 0) {
        throw Error(ErrorCode::EntryNotFound, fmt::format("{}: no model at {}", profile_.device_id, cmd.model_path));
    }
    cancelled_ = false;
    power_dropped_ = false;
    trace_.reset();
    files_.erase(cmd.result_path);
    runner_ = std::thread(&SimulatedDevice::run, this, std::move(cmd));
}

void SimulatedDevice::set_power(bool on) {
    stall_if(on ? JobState::PowerOn : JobState::PowerOff);
    {
        std::lock_guard lock(mu_);
        powered_ = on;
        if (!on) power_dropped_ = true;
    }
    cv_.notify_all();
}

void SimulatedDevice::await_signal(const std::string& job_id, std::chrono::milliseconds deadline) {
    server_.await(job_id, deadline);
}

std::map<std::string, Bytes> SimulatedDevice::pull(const std::vector<std::string>& paths) {
    stall_if(JobState::Collect);
    join_runner();
    std::lock_guard lock(mu_);
    std::map<std::string, Bytes> out;
    for (const auto& p : paths) {
        auto it = files_.find(p);
        if (it == files_.end()) {
            throw Error(ErrorCode::EntryNotFound, fmt::format("{}: no file at {}", profile_.device_id, p));
        }
        out.emplace(p, it->second);
    }
    return out;
}

PowerTrace SimulatedDevice::collect_trace() {
    join_runner();
    std::lock_guard lock(mu_);
    if (trace_) return *trace_;
    return PowerTrace{profile_.sample_rate_hz, {}, profile_.baseline_w};
}

void SimulatedDevice::reset() {
    {
        std::lock_guard lock(mu_);
        cancelled_ = true;
        powered_ = true;
    }
    cv_.notify_all();
    join_runner();
}

void SimulatedDevice::join_runner() {
    std::thread t;
    {
        std::lock_guard lock(mu_);
        t = std::move(runner_);
    }
    if (t.joinable()) t.join();
}

std::vector<double> SimulatedDevice::draw_latencies(const SimulatedProfile& profile, const RunnerCommand& cmd,
                                                    std::int64_t count, std::uint64_t stream) {
    std::mt19937_64 rng(profile.seed ^ stream);
    const double base = profile.latency_b_ms +
                        profile.latency_a_ms_per_flop * cmd.flops_per_sample * static_cast<double>(cmd.batch_size);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        if (profile.jitter > 0.0) {
            const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
            out.push_back(base * (1.0 + profile.jitter * (2.0 * u - 1.0)));
        } else {
            out.push_back(base);
        }
    }
    return out;
}

void SimulatedDevice::run(RunnerCommand cmd) {
    json states = json::array();
    states.push_back(to_string(JobState::WaitPowerOff));
    {
        std::unique_lock lock(mu_);
        const bool dropped = cv_.wait_for(lock, profile_.power_off_wait, [&] { return power_dropped_ || cancelled_; });
        if (cancelled_ || !dropped) {
            json result{{"job_id", cmd.job_id}, {"states", states}, {"error", "USB power never dropped"}};
            const auto text = result.dump();
            files_[cmd.result_path] = Bytes(text.begin(), text.end());
            return;
        }
    }

    const auto all = draw_latencies(profile_, cmd, cmd.warmup_runs + cmd.measured_runs, fnv1a(cmd.job_id));
    states.push_back(to_string(JobState::Warmup));
    const std::vector<double> warmup(all.begin(), all.begin() + cmd.warmup_runs);
    states.push_back(to_string(JobState::Measure));
    const std::vector<double> measured(all.begin() + cmd.warmup_runs, all.end());

    // Midpoint sampling of the MEASURE window: busy runs draw baseline +
    // power_w, inter-run sleeps draw baseline.
    PowerTrace trace{profile_.sample_rate_hz, {}, profile_.baseline_w};
    const double fs = profile_.sample_rate_hz;
    double window_ms = 0.0;
    for (double l : measured) window_ms += l;
    window_ms += cmd.inter_run_sleep_ms * static_cast<double>(measured.size() - 1);
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(window_ms / 1000.0 * fs)));
    trace.samples.assign(n, profile_.baseline_w);
    double start_ms = 0.0;
    for (double l : measured) {
        const double end_ms = start_ms + l;
        // sample i is busy iff start <= (i + 0.5) / fs < end
        const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(start_ms / 1000.0 * fs - 0.5)));
        for (std::size_t i = first; i < n && (static_cast<double>(i) + 0.5) / fs * 1000.0 < end_ms; ++i) {
            trace.samples[i] = profile_.baseline_w + profile_.power_w;
        }
        start_ms = end_ms + cmd.inter_run_sleep_ms;
    }

    states.push_back(to_string(JobState::Signal));
    json result{{"job_id", cmd.job_id},
                {"states", states},
                {"warmup_ms", warmup},
                {"latencies_ms", measured},
                {"batch_size", cmd.batch_size},
                {"threads", cmd.threads}};
    if (cmd.affinity) result["affinity"] = *cmd.affinity;
    const auto text = result.dump();
    {
        std::lock_guard lock(mu_);
        files_[cmd.result_path] = Bytes(text.begin(), text.end());
        trace_ = std::move(trace);
    }
    if (!profile_.never_signal) {
        try {
            send_completion(cmd.signal_endpoint, cmd.job_id);
        } catch (const Error& e) {
            spdlog::warn("{}: completion signal failed: {}", profile_.device_id, e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// ShellDevice

ShellDevice::ShellDevice(std::string device_id, std::string transport, ShellRunner runner)
    : device_id_(std::move(device_id)), transport_(std::move(transport)), runner_(std::move(runner)) {
    if (!runner_) {
        runner_ = [](const std::string& command) { return std::system(command.c_str()); };
    }
}

void ShellDevice::run_or_throw(const std::string& command, JobState state) {
    spdlog::debug("{}: {}", device_id_, command);
    const int rc = runner_(command);
    if (rc != 0) {
        throw Error(ErrorCode::AdapterTimeout,
                    fmt::format("{}: '{}' exited with {} in {}", device_id_, command, rc, to_string(state)));
    }
}

DeviceStatus ShellDevice::status() {
    const int rc = runner_(fmt::format("{} get-state", transport_));
    if (rc != 0) return {false, fmt::format("transport exited with {}", rc)};
    return {true, "online"};
}

void ShellDevice::push(const std::vector<PushFile>& files) {
    for (const auto& f : files) {
        const auto local = std::filesystem::temp_directory_path() /
                           fmt::format("prospector-push-{}", sha256_hex(f.data).substr(0, 16));
        write_file(local, ByteView(f.data));
        try {
            run_or_throw(fmt::format("{} push {} {}", transport_, shell_quote(local.string()), shell_quote(f.remote_path)),
                         JobState::Push);
        } catch (...) {
            std::filesystem::remove(local);
            throw;
        }
        std::filesystem::remove(local);
    }
}

void ShellDevice::exec(const std::string& command) {
    run_or_throw(fmt::format("{} shell {}", transport_, shell_quote(fmt::format("nohup {} >/dev/null 2>&1 &", command))),
                 JobState::AssertState);
}

void ShellDevice::set_power(bool) {
    throw Error(ErrorCode::UnsupportedFeature, fmt::format("{}: USB power control needs a power monitor", device_id_));
}

void ShellDevice::await_signal(const std::string& job_id, std::chrono::milliseconds deadline) {
    server_.await(job_id, deadline);
}

std::map<std::string, Bytes> ShellDevice::pull(const std::vector<std::string>& paths) {
    std::map<std::string, Bytes> out;
    for (const auto& remote : paths) {
        const auto local = std::filesystem::temp_directory_path() /
                           fmt::format("prospector-pull-{}", sha256_hex(as_bytes(device_id_ + remote)).substr(0, 16));
        run_or_throw(fmt::format("{} pull {} {}", transport_, shell_quote(remote), shell_quote(local.string())),
                     JobState::Collect);
        out.emplace(remote, read_file(local));
        std::filesystem::remove(local);
    }
    return out;
}

PowerTrace ShellDevice::collect_trace() {
    throw Error(ErrorCode::UnsupportedFeature, fmt::format("{}: power tracing needs a power monitor", device_id_));
}

void ShellDevice::reset() {
    runner_(fmt::format("{} shell {}", transport_, shell_quote(fmt::format("pkill -f {}", k_runner_binary))));
}

}  // namespace prospector
