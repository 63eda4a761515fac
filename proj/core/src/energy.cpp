// SPDX-License-Identifier: Apache-2.0
#include "prospector/energy.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "prospector/error.hpp"

namespace prospector {

namespace {

std::size_t window_samples(const PowerTrace& trace, double window_s) {
    if (trace.samples.empty()) throw Error(ErrorCode::EmptyTrace, "power trace has no samples");
    if (!(trace.sample_rate_hz > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("sample rate {} Hz must be positive", trace.sample_rate_hz));
    }
    if (window_s <= 0.0) return trace.samples.size();
    const auto n = static_cast<std::size_t>(std::llround(window_s * trace.sample_rate_hz));
    if (n > trace.samples.size()) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("trace covers {} s, window is {} s",
                                static_cast<double>(trace.samples.size()) / trace.sample_rate_hz, window_s));
    }
    if (n == 0) throw Error(ErrorCode::EmptyTrace, "window holds no samples");
    return n;
}

}  // namespace

double measure_baseline(const PowerTrace& idle, double window_s) {
    const auto n = window_samples(idle, window_s);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += idle.samples[i];
    return sum / static_cast<double>(n);
}

double integrate_energy(const PowerTrace& trace, double window_s) {
    const auto n = window_samples(trace, window_s);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::max(trace.samples[i] - trace.baseline_w, 0.0);
    return sum / trace.sample_rate_hz;
}

double efficiency(double total_flops, double energy_j) {
    if (!(energy_j > 0.0)) throw Error(ErrorCode::ZeroEnergy, fmt::format("energy {} J is not positive", energy_j));
    return total_flops / energy_j;
}

ScenarioSpec sound_recognition_1h(double audio_window_s) {
    if (!(audio_window_s > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("audio window {} s must be positive", audio_window_s));
    }
    const auto count = static_cast<std::int64_t>(std::ceil(3600.0 / audio_window_s));
    return {"sound_recognition_1h", count, fmt::format("ceil(3600 s / {} s audio per inference)", audio_window_s)};
}

ScenarioSpec typing_275_words() { return {"typing_275_words", 275, "one inference per typed word"}; }

ScenarioSpec segmentation_1h_15fps() {
    return {"segmentation_1h_15fps", 15 * 3600, "15 frames/s for 3600 s"};
}

std::vector<ScenarioSpec> builtin_scenarios(double audio_window_s) {
    return {segmentation_1h_15fps(), sound_recognition_1h(audio_window_s), typing_275_words()};
}

double scenario_discharge(const ScenarioSpec& spec, double per_inference_energy_j, double battery_voltage_v) {
    if (!(per_inference_energy_j >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("per-inference energy {} J is negative", per_inference_energy_j));
    }
    if (!(battery_voltage_v > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("battery voltage {} V must be positive", battery_voltage_v));
    }
    const double joules = static_cast<double>(spec.inference_count) * per_inference_energy_j;
    return joules / (battery_voltage_v * 3600.0) * 1000.0;
}

}  // namespace prospector
