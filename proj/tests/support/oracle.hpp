// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "prospector/ir.hpp"

namespace prospector::testing {

enum class SpecKind { Conv, Depthwise, Dense, MaxPool, AvgPool, Relu };
enum class PadMode { Same, Valid, Explicit };

struct LayerSpec {
    SpecKind kind = SpecKind::Relu;
    std::int64_t kh = 1, kw = 1, sh = 1, sw = 1, dh = 1, dw = 1;
    PadMode pad = PadMode::Valid;
    std::int64_t pt = 0, pb = 0, pl = 0, pr = 0;
    std::int64_t out_channels = 0;
    std::int64_t groups = 1;
    std::int64_t multiplier = 1;
    std::int64_t units = 0;
    bool bias = true;
};

struct NetSpec {
    std::int64_t batch = 1, channels = 1, height = 1, width = 1;
    Layout layout = Layout::Nchw;
    std::vector<LayerSpec> layers;
};

struct OracleTotals {
    std::int64_t macs = 0;
    std::int64_t flops = 0;
    std::int64_t params = 0;
    friend bool operator==(const OracleTotals&, const OracleTotals&) = default;
};

/// Counts by walking every output position and every kernel tap. Window
/// positions are enumerated directly rather than from a closed form.
OracleTotals loop_nest_count(const NetSpec& net);

/// A legal random chain of at most `max_layers` layers.
NetSpec random_net(std::mt19937_64& rng, int max_layers = 10);

/// Builds the equivalent chain graph with f32 weights.
ModelGraph to_graph(const NetSpec& net, std::uint64_t weight_seed = 1);

std::string describe(const NetSpec& net);

}  // namespace prospector::testing
