// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "prospector/energy.hpp"
#include "prospector/error.hpp"

namespace prospector {
namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no Error thrown";
    return ErrorCode::InvalidArgument;
}

PowerTrace constant(double watts, double seconds, double rate, double baseline = 0.0) {
    PowerTrace t;
    t.sample_rate_hz = rate;
    t.baseline_w = baseline;
    t.samples.assign(static_cast<std::size_t>(std::llround(seconds * rate)), watts);
    return t;
}

PowerTrace triangle(double peak, double seconds, double rate) {
    PowerTrace t;
    t.sample_rate_hz = rate;
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
    for (std::size_t i = 0; i < n; ++i) {
        const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        t.samples.push_back(peak * (1.0 - std::abs(2.0 * x - 1.0)));
    }
    return t;
}

TEST(Energy, ConstantPowerClosedForm) {
    for (double rate : {100.0, 1000.0, 5000.0}) {
        for (double p : {0.25, 1.0, 3.7}) {
            const auto t = constant(p + 0.5, 2.0, rate, 0.5);
            EXPECT_NEAR(integrate_energy(t), p * 2.0, p / rate);
        }
    }
}

TEST(Energy, TriangularRampClosedForm) {
    for (double rate : {200.0, 5000.0}) {
        const auto t = triangle(4.0, 3.0, rate);
        EXPECT_NEAR(integrate_energy(t), 4.0 * 3.0 / 2.0, 4.0 / rate);
    }
}

TEST(Energy, NegativeNetPowerClampsToZero) {
    auto t = constant(0.2, 1.0, 100.0, 0.5);
    EXPECT_EQ(integrate_energy(t), 0.0);
    t.samples[0] = 1.5;
    EXPECT_NEAR(integrate_energy(t), 1.0 / 100.0, 1e-12);
}

TEST(Energy, WindowLimitsIntegration) {
    const auto t = constant(2.0, 10.0, 100.0);
    EXPECT_NEAR(integrate_energy(t, 2.5), 5.0, 2.0 / 100.0);
    EXPECT_EQ(code_of([&] { integrate_energy(t, 11.0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { integrate_energy(PowerTrace{}); }), ErrorCode::EmptyTrace);
}

TEST(Energy, EnergyIsMonotoneInPower) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(0.0, 3.0);
    for (int i = 0; i < 100; ++i) {
        PowerTrace a;
        a.sample_rate_hz = 1000;
        for (int k = 0; k < 500; ++k) a.samples.push_back(d(rng));
        auto b = a;
        for (auto& s : b.samples) s += 0.1;
        EXPECT_GE(integrate_energy(b), integrate_energy(a));
    }
}

TEST(Baseline, MeanOfIdleWindow) {
    auto idle = constant(0.5, 12.0, 100.0);
    for (std::size_t i = 1000; i < idle.samples.size(); ++i) idle.samples[i] = 9.0;
    EXPECT_NEAR(measure_baseline(idle), 0.5, 1e-12);
    EXPECT_NEAR(measure_baseline(idle, 1.0), 0.5, 1e-12);
}

TEST(Efficiency, FlopsPerJoule) {
    EXPECT_DOUBLE_EQ(efficiency(2e9, 0.5), 4e9);
    EXPECT_DOUBLE_EQ(to_mflop_per_sw(4e9), 4000.0);
    EXPECT_EQ(code_of([] { efficiency(1.0, 0.0); }), ErrorCode::ZeroEnergy);
}

TEST(Scenarios, InferenceCounts) {
    EXPECT_EQ(sound_recognition_1h().inference_count, 3600);
    EXPECT_EQ(sound_recognition_1h(0.5).inference_count, 7200);
    EXPECT_EQ(typing_275_words().inference_count, 275);
    EXPECT_EQ(segmentation_1h_15fps().inference_count, 54000);
    const auto all = builtin_scenarios();
    ASSERT_EQ(all.size(), 3u);
    EXPECT_TRUE(std::is_sorted(all.begin(), all.end(), [](auto& a, auto& b) { return a.name < b.name; }));
    for (const auto& s : all) EXPECT_FALSE(s.derivation.empty());
}

TEST(Scenarios, DischargeHandArithmetic) {
    // 54000 * 0.5 J = 27000 J; 27000 / (3.85 * 3600) * 1000 = 1948.05 mAh.
    EXPECT_NEAR(scenario_discharge(segmentation_1h_15fps(), 0.5, 3.85), 1948.05, 0.005);
    // 275 * 0.001 J = 0.275 J -> 0.0198 mAh.
    EXPECT_NEAR(scenario_discharge(typing_275_words(), 0.001, 3.85), 0.0198, 0.00005);
    EXPECT_EQ(code_of([] { scenario_discharge(typing_275_words(), -1.0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { scenario_discharge(typing_275_words(), 1.0, 0.0); }), ErrorCode::InvalidArgument);
}

}  // namespace
}  // namespace prospector
