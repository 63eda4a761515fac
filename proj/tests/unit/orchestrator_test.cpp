// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <chrono>

#include "prospector/error.hpp"
#include "prospector/orchestrator.hpp"
#include "support.hpp"

namespace prospector {
namespace {

using namespace std::chrono_literals;
using testing::TempDir;

BenchJob make_job(std::string id, std::string device = "sim0") {
    BenchJob j;
    j.job_id = std::move(id);
    j.model_id = "model-" + j.job_id;
    j.device_id = std::move(device);
    j.config.warmup_runs = 5;
    j.config.measured_runs = 20;
    j.config.inter_run_sleep_ms = 5.0;
    j.flops_per_sample = 6936;
    j.payload = Bytes{1, 2, 3, 4};
    return j;
}

SimulatedProfile sim(std::string id = "sim0") {
    SimulatedProfile p;
    p.device_id = std::move(id);
    p.latency_a_ms_per_flop = 0.0;
    p.latency_b_ms = 10.0;
    return p;
}

TEST(BenchConfigTest, Validation) {
    BenchConfig ok;
    EXPECT_NO_THROW(validate(ok));
    auto bad = [](auto mutate) {
        BenchConfig c;
        mutate(c);
        try {
            validate(c);
            return false;
        } catch (const Error& e) {
            return e.code() == ErrorCode::InvalidArgument;
        }
    };
    EXPECT_TRUE(bad([](BenchConfig& c) { c.warmup_runs = -1; }));
    EXPECT_TRUE(bad([](BenchConfig& c) { c.measured_runs = 0; }));
    EXPECT_TRUE(bad([](BenchConfig& c) { c.batch_size = 0; }));
    EXPECT_TRUE(bad([](BenchConfig& c) { c.threads = 0; }));
    EXPECT_TRUE(bad([](BenchConfig& c) { c.inter_run_sleep_ms = -1; }));
    EXPECT_TRUE(bad([](BenchConfig& c) {
        c.threads = 2;
        c.affinity = 3;
    }));
    EXPECT_FALSE(bad([](BenchConfig& c) {
        c.threads = 4;
        c.affinity = 2;
    }));

    auto job = make_job("has space");
    EXPECT_THROW(validate(job), Error);
    job = make_job("ok");
    job.payload_name = "a/b";
    EXPECT_THROW(validate(job), Error);
}

TEST(BenchOptionsTest, PerDeviceDeadline) {
    BenchOptions o;
    o.signal_deadline = 123ms;
    o.device_deadlines["slow"] = 999ms;
    EXPECT_EQ(o.deadline_for("slow"), 999ms);
    EXPECT_EQ(o.deadline_for("other"), 123ms);
}

TEST(OrchestratorTest, SimulatedRunProducesExactLatencies) {
    SimulatedDevice dev(sim());
    const auto job = make_job("m1-b1");
    const auto r = run_job(job, dev);
    ASSERT_TRUE(r.ok);
    ASSERT_EQ(r.latencies_ms.size(), 20u);
    for (double l : r.latencies_ms) EXPECT_EQ(l, 10.0);
    const auto lines = dev.server().received();
    EXPECT_NE(std::find(lines.begin(), lines.end(), "DONE m1-b1"), lines.end());

    const std::vector<JobState> expected{JobState::Push,    JobState::AssertState, JobState::PowerOff,
                                         JobState::WaitPowerOff, JobState::Warmup, JobState::Measure,
                                         JobState::Signal,  JobState::PowerOn,     JobState::Collect};
    EXPECT_EQ(r.states, expected);
    EXPECT_EQ(r.last_state, JobState::Collect);

    // 2 W over 200 ms of busy time, one sample quantum of slack.
    const double quantum = dev.profile().power_w / dev.profile().sample_rate_hz;
    EXPECT_NEAR(r.energy_j, 0.4, quantum);
    EXPECT_NEAR(r.throughput_ips, 100.0, 1e-9);
    EXPECT_NEAR(r.mean_power_w, 2.0, quantum / 0.2);
    EXPECT_DOUBLE_EQ(r.total_flops, 6936.0 * 20);
    ASSERT_TRUE(r.efficiency_flops_per_j.has_value());
    EXPECT_NEAR(*r.efficiency_flops_per_j, r.total_flops / r.energy_j, 1e-6);
    EXPECT_NEAR(r.per_inference_energy_j, r.energy_j / 20, 1e-12);
    EXPECT_GT(r.trace_samples, 0u);
}

TEST(OrchestratorTest, BatchScalesLatencyWithFlops) {
    auto p = sim();
    p.latency_a_ms_per_flop = 1e-3;
    SimulatedDevice dev(p);
    auto job = make_job("b5");
    job.config.batch_size = 5;
    job.config.warmup_runs = 0;
    job.config.measured_runs = 3;
    const auto r = run_job(job, dev);
    for (double l : r.latencies_ms) EXPECT_NEAR(l, 10.0 + 1e-3 * 6936 * 5, 1e-9);
    EXPECT_EQ(r.batch_size, 5);
    EXPECT_NEAR(r.throughput_ips, 15.0 / (r.total_latency_ms() / 1000.0), 1e-9);
}

TEST(OrchestratorTest, SeededLogsAreByteIdentical) {
    auto run_once = [] {
        auto p = sim();
        p.jitter = 0.15;
        p.seed = 42;
        SimulatedDevice dev(p);
        std::vector<BenchResult> results;
        for (const char* id : {"j1", "j2"}) results.push_back(run_job(make_job(id), dev));
        return to_jsonl(results);
    };
    const auto first = run_once();
    const auto second = run_once();
    EXPECT_EQ(first, second);
    EXPECT_NE(first.find("\"job_id\":\"j2\""), std::string::npos);
}

TEST(OrchestratorTest, NeverSignalLosesAtDeadline) {
    auto p = sim();
    p.never_signal = true;
    SimulatedDevice dev(p);
    BenchOptions o;
    o.signal_deadline = 300ms;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        run_job(make_job("quiet"), dev, o);
        FAIL() << "expected SignalLost";
    } catch (const JobFailure& f) {
        const auto elapsed = std::chrono::steady_clock::now() - t0;
        EXPECT_EQ(f.code(), ErrorCode::SignalLost);
        EXPECT_GE(elapsed, 300ms);
        EXPECT_LE(elapsed, 300ms + CompletionServer::k_poll_interval + 10ms);
        ASSERT_GE(f.states().size(), 3u);
        EXPECT_EQ(f.states()[2], JobState::PowerOff);
        EXPECT_EQ(f.state(), JobState::Signal);
    }
    EXPECT_TRUE(dev.status().ready);
}

TEST(OrchestratorTest, StallReportsLastState) {
    for (auto state : {JobState::Push, JobState::AssertState, JobState::PowerOff, JobState::PowerOn,
                       JobState::Collect}) {
        auto p = sim();
        p.stall_in = state;
        SimulatedDevice dev(p);
        const auto r = execute_job(make_job("stall"), dev);
        EXPECT_FALSE(r.ok);
        EXPECT_EQ(r.error, ErrorCode::AdapterTimeout) << to_string(state);
        EXPECT_EQ(r.last_state, state);
        EXPECT_FALSE(r.error_message.empty());
    }
}

TEST(OrchestratorTest, RefusalIsDeviceRefused) {
    auto p = sim();
    p.refuse = true;
    SimulatedDevice dev(p);
    const auto r = execute_job(make_job("r"), dev);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.error, ErrorCode::DeviceRefused);
    EXPECT_EQ(r.last_state, JobState::AssertState);
}

TEST(OrchestratorTest, WrongAdapterIsInvalidArgument) {
    SimulatedDevice dev(sim("other"));
    try {
        run_job(make_job("x"), dev);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
}

TEST(OrchestratorTest, RunJobsAcrossDevices) {
    SimulatedDevice a(sim("simA"));
    SimulatedDevice b(sim("simB"));
    std::vector<BenchJob> jobs{make_job("z3", "simA"), make_job("a1", "simB"), make_job("m2", "simA")};
    for (auto& j : jobs) j.config.measured_runs = 3;
    const std::map<std::string, DeviceAdapter*> adapters{{"simA", &a}, {"simB", &b}};
    const auto results = run_jobs(jobs, adapters);
    ASSERT_EQ(results.size(), 3u);
    EXPECT_EQ(results[0].job_id, "a1");
    EXPECT_EQ(results[1].job_id, "m2");
    EXPECT_EQ(results[2].job_id, "z3");
    for (const auto& r : results) EXPECT_TRUE(r.ok) << r.error_message;
    EXPECT_EQ(results[0].device_id, "simB");

    auto dup = jobs;
    dup.push_back(make_job("a1", "simA"));
    EXPECT_THROW(run_jobs(dup, adapters), Error);
    EXPECT_THROW(run_jobs({make_job("q", "ghost")}, adapters), Error);
    EXPECT_TRUE(run_jobs({}, adapters).empty());
}

TEST(ResultsLogTest, JsonRoundTrip) {
    SimulatedDevice dev(sim());
    auto ok = run_job(make_job("ok1"), dev);
    auto p = sim();
    p.refuse = true;
    SimulatedDevice refusing(p);
    auto failed = execute_job(make_job("bad1"), refusing);

    for (const auto& r : {ok, failed}) {
        const auto line = to_json_line(r);
        EXPECT_EQ(line.find('\n'), std::string::npos);
        const auto back = bench_result_from_json(line);
        EXPECT_EQ(back.job_id, r.job_id);
        EXPECT_EQ(back.ok, r.ok);
        EXPECT_EQ(back.error, r.error);
        EXPECT_EQ(back.states, r.states);
        EXPECT_EQ(back.last_state, r.last_state);
        EXPECT_EQ(back.latencies_ms, r.latencies_ms);
        EXPECT_EQ(back.efficiency_flops_per_j.has_value(), r.efficiency_flops_per_j.has_value());
        EXPECT_EQ(back.trace_samples, r.trace_samples);
        EXPECT_TRUE(back.trace.samples.empty());
        EXPECT_EQ(to_json_line(back), line);
    }
    EXPECT_FALSE(failed.efficiency_flops_per_j.has_value());

    TempDir tmp;
    write_results_log(tmp / "results.jsonl", {ok, failed});
    const auto read = read_results_log(tmp / "results.jsonl");
    ASSERT_EQ(read.size(), 2u);
    EXPECT_EQ(read[0].job_id, "bad1");
    EXPECT_EQ(read[1].job_id, "ok1");
}

TEST(ResultsLogTest, MalformedLinesAreIo) {
    for (const char* text : {"{not json", "{\"job_id\":\"x\"}", "[1,2]"}) {
        try {
            parse_jsonl(text);
            FAIL() << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::Io);
        }
    }
    EXPECT_TRUE(parse_jsonl("\n  \n").empty());
}

}  // namespace
}  // namespace prospector
