// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prospector {

inline constexpr double k_default_sample_rate_hz = 5000.0;
inline constexpr double k_default_baseline_window_s = 10.0;
inline constexpr double k_default_battery_voltage_v = 3.85;
inline constexpr double k_default_audio_window_s = 1.0;

/// Power monitor readings in watts at a fixed sample rate. `baseline_w` is
/// the idle (screen-on) draw subtracted before attributing energy.
struct PowerTrace {
    double sample_rate_hz = k_default_sample_rate_hz;
    std::vector<double> samples;
    double baseline_w = 0.0;
};

/// Mean of the first `window_s` seconds of an idle trace.
double measure_baseline(const PowerTrace& idle, double window_s = k_default_baseline_window_s);

/// E = sum(max(P_i - baseline, 0)) / sample_rate over the first `window_s`
/// seconds, or the whole trace when window_s <= 0. Negative net power is
/// clamped to zero. Throws EmptyTrace, or InvalidArgument when the trace is
/// shorter than the window.
double integrate_energy(const PowerTrace& trace, double window_s = 0.0);

/// FLOPs per joule; numerically equal to FLOP/s per watt. Throws ZeroEnergy.
double efficiency(double total_flops, double energy_j);

/// FLOPs per joule expressed as MFLOP/sW.
inline double to_mflop_per_sw(double flops_per_j) { return flops_per_j / 1e6; }

struct ScenarioSpec {
    std::string name;
    std::int64_t inference_count = 0;
    std::string derivation;
};

ScenarioSpec sound_recognition_1h(double audio_window_s = k_default_audio_window_s);
ScenarioSpec typing_275_words();
ScenarioSpec segmentation_1h_15fps();

/// The three usage scenarios, sorted by name.
std::vector<ScenarioSpec> builtin_scenarios(double audio_window_s = k_default_audio_window_s);

/// mAh = inference_count * energy / (voltage * 3600) * 1000. Throws
/// InvalidArgument for negative energy or non-positive voltage.
double scenario_discharge(const ScenarioSpec& spec, double per_inference_energy_j,
                          double battery_voltage_v = k_default_battery_voltage_v);

}  // namespace prospector
