// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "prospector/bytes.hpp"
#include "prospector/ir.hpp"

namespace prospector::testing {

/// tests/fixtures in the source tree.
std::filesystem::path fixture_dir();
/// The built prospector executable, or empty when tools are not built.
std::filesystem::path cli_path();

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct ZipMember {
    std::string name;
    Bytes data;
    bool deflate = true;
};

/// Minimal PKZIP writer: local headers, central directory, EOCD.
Bytes make_zip(const std::vector<ZipMember>& members);

/// Dex file with a header, a string_ids table and string data only. Strings
/// are written in the order given.
Bytes make_dex(const std::vector<std::string>& strings);

/// Little-endian f32 payload.
Bytes f32_bytes(const std::vector<float>& values);
/// `count` pseudo-random non-zero floats from `seed`.
std::vector<float> random_floats(std::size_t count, std::uint64_t seed);

WeightTensor f32_weight(Shape shape, WeightRole role, std::uint64_t seed);

LayerNode conv_node(NodeId id, std::string name, std::int64_t out_channels, std::int64_t k, std::int64_t stride,
                    const std::string& padding, std::int64_t in_channels, bool with_weights = true);
LayerNode depthwise_node(NodeId id, std::string name, std::int64_t channels, std::int64_t k, std::int64_t stride,
                         const std::string& padding, bool with_weights = true);
LayerNode dense_node(NodeId id, std::string name, std::int64_t in_features, std::int64_t units, bool bias = true,
                     std::uint64_t seed = 1);
LayerNode simple_node(NodeId id, std::string name, OpKind kind);

/// Chain graph: node i feeds node i+1, node 0 takes `input_shape`.
ModelGraph chain(std::vector<LayerNode> nodes, Shape input_shape, Layout layout = Layout::Nchw);

/// Runs `command` through the shell; returns the exit status.
int run_command(const std::string& command);

}  // namespace prospector::testing
