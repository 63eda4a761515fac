// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <cstdlib>
#include <cstring>
#include <random>
#include <stdexcept>

#include <sys/wait.h>
#include <zlib.h>

namespace prospector::testing {

namespace fs = std::filesystem;

fs::path fixture_dir() { return PROSPECTOR_FIXTURE_DIR; }

fs::path cli_path() {
#ifdef PROSPECTOR_CLI_PATH
    return PROSPECTOR_CLI_PATH;
#else
    return {};
#endif
}

TempDir::TempDir() {
    static std::mt19937_64 gen{std::random_device{}()};
    for (int attempt = 0; attempt < 16; ++attempt) {
        auto candidate = fs::temp_directory_path() / ("prospector-test-" + std::to_string(gen()));
        if (fs::create_directory(candidate)) {
            path_ = candidate;
            return;
        }
    }
    throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

namespace {

void put16(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(Bytes& out, std::uint32_t v) {
    put16(out, v & 0xFFFF);
    put16(out, v >> 16);
}

void put32_at(Bytes& out, std::size_t pos, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[pos + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

Bytes raw_deflate(const Bytes& in) {
    z_stream z{};
    if (deflateInit2(&z, Z_BEST_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw std::runtime_error("deflateInit2 failed");
    }
    Bytes out(deflateBound(&z, static_cast<uLong>(in.size())));
    z.next_in = const_cast<Bytef*>(in.data());
    z.avail_in = static_cast<uInt>(in.size());
    z.next_out = out.data();
    z.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&z, Z_FINISH);
    out.resize(z.total_out);
    deflateEnd(&z);
    if (rc != Z_STREAM_END) throw std::runtime_error("deflate failed");
    return out;
}

void put_uleb128(Bytes& out, std::uint32_t v) {
    do {
        std::uint8_t b = v & 0x7F;
        v >>= 7;
        if (v) b |= 0x80;
        out.push_back(b);
    } while (v);
}

/// UTF-8 to MUTF-8: NUL as C0 80, supplementary code points as surrogate pairs.
Bytes mutf8(const std::string& s, std::uint32_t& utf16_units) {
    Bytes out;
    utf16_units = 0;
    auto put_unit = [&](std::uint32_t u) {
        ++utf16_units;
        if (u != 0 && u < 0x80) {
            out.push_back(static_cast<std::uint8_t>(u));
        } else if (u < 0x800) {
            out.push_back(static_cast<std::uint8_t>(0xC0 | (u >> 6)));
            out.push_back(static_cast<std::uint8_t>(0x80 | (u & 0x3F)));
        } else {
            out.push_back(static_cast<std::uint8_t>(0xE0 | (u >> 12)));
            out.push_back(static_cast<std::uint8_t>(0x80 | ((u >> 6) & 0x3F)));
            out.push_back(static_cast<std::uint8_t>(0x80 | (u & 0x3F)));
        }
    };
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::uint32_t cp = 0;
        std::size_t len = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6) {
            cp = c & 0x1F;
            len = 2;
        } else if ((c >> 4) == 0xE) {
            cp = c & 0x0F;
            len = 3;
        } else {
            cp = c & 0x07;
            len = 4;
        }
        for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
        i += len;
        if (cp >= 0x10000) {
            cp -= 0x10000;
            put_unit(0xD800 + (cp >> 10));
            put_unit(0xDC00 + (cp & 0x3FF));
        } else {
            put_unit(cp);
        }
    }
    return out;
}

}  // namespace

Bytes make_zip(const std::vector<ZipMember>& members) {
    Bytes out;
    Bytes central;
    for (const auto& m : members) {
        const auto crc = static_cast<std::uint32_t>(crc32(0L, m.data.data(), static_cast<uInt>(m.data.size())));
        const Bytes body = m.deflate ? raw_deflate(m.data) : m.data;
        const auto offset = static_cast<std::uint32_t>(out.size());
        const std::uint16_t method = m.deflate ? 8 : 0;

        put32(out, 0x04034b50);
        put16(out, 20);
        put16(out, 0);
        put16(out, method);
        put16(out, 0);
        put16(out, 0x5261);
        put32(out, crc);
        put32(out, static_cast<std::uint32_t>(body.size()));
        put32(out, static_cast<std::uint32_t>(m.data.size()));
        put16(out, static_cast<std::uint32_t>(m.name.size()));
        put16(out, 0);
        out.insert(out.end(), m.name.begin(), m.name.end());
        out.insert(out.end(), body.begin(), body.end());

        put32(central, 0x02014b50);
        put16(central, 20);
        put16(central, 20);
        put16(central, 0);
        put16(central, method);
        put16(central, 0);
        put16(central, 0x5261);
        put32(central, crc);
        put32(central, static_cast<std::uint32_t>(body.size()));
        put32(central, static_cast<std::uint32_t>(m.data.size()));
        put16(central, static_cast<std::uint32_t>(m.name.size()));
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put32(central, 0);
        put32(central, offset);
        central.insert(central.end(), m.name.begin(), m.name.end());
    }
    const auto cd_offset = static_cast<std::uint32_t>(out.size());
    out.insert(out.end(), central.begin(), central.end());
    put32(out, 0x06054b50);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<std::uint32_t>(members.size()));
    put16(out, static_cast<std::uint32_t>(members.size()));
    put32(out, static_cast<std::uint32_t>(central.size()));
    put32(out, cd_offset);
    put16(out, 0);
    return out;
}

Bytes make_dex(const std::vector<std::string>& strings) {
    constexpr std::uint32_t header_size = 0x70;
    const auto ids_off = header_size;
    const auto data_off = ids_off + 4 * static_cast<std::uint32_t>(strings.size());
    Bytes data;
    std::vector<std::uint32_t> offsets;
    for (const auto& s : strings) {
        offsets.push_back(data_off + static_cast<std::uint32_t>(data.size()));
        std::uint32_t units = 0;
        const auto encoded = mutf8(s, units);
        put_uleb128(data, units);
        data.insert(data.end(), encoded.begin(), encoded.end());
        data.push_back(0);
    }
    while (data.size() % 4) data.push_back(0);

    Bytes out(header_size, 0);
    std::memcpy(out.data(), "dex\n035\0", 8);
    put32_at(out, 0x20, data_off + static_cast<std::uint32_t>(data.size()));
    put32_at(out, 0x24, header_size);
    put32_at(out, 0x28, 0x12345678);
    put32_at(out, 0x38, static_cast<std::uint32_t>(strings.size()));
    put32_at(out, 0x3C, strings.empty() ? 0 : ids_off);
    put32_at(out, 0x68, static_cast<std::uint32_t>(data.size()));
    put32_at(out, 0x6C, data_off);
    for (auto off : offsets) put32(out, off);
    out.insert(out.end(), data.begin(), data.end());
    put32_at(out, 8, static_cast<std::uint32_t>(adler32(1L, out.data() + 12, static_cast<uInt>(out.size() - 12))));
    return out;
}

Bytes f32_bytes(const std::vector<float>& values) {
    Bytes out(values.size() * 4);
    std::memcpy(out.data(), values.data(), out.size());
    return out;
}

std::vector<float> random_floats(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<float> dist(0.01f, 1.0f);
    std::vector<float> v(count);
    for (auto& x : v) x = (gen() & 1 ? 1.0f : -1.0f) * dist(gen);
    return v;
}

WeightTensor f32_weight(Shape shape, WeightRole role, std::uint64_t seed) {
    WeightTensor w;
    w.role = role;
    w.dtype = DType::F32;
    w.data = f32_bytes(random_floats(static_cast<std::size_t>(element_count(shape)), seed));
    w.shape = std::move(shape);
    return w;
}

LayerNode conv_node(NodeId id, std::string name, std::int64_t out_channels, std::int64_t k, std::int64_t stride,
                    const std::string& padding, std::int64_t in_channels, bool with_weights) {
    LayerNode n{id, std::move(name), OpType::of(OpKind::Conv2d), {}, {}};
    n.attrs["out_channels"] = out_channels;
    n.attrs["kernel_h"] = k;
    n.attrs["kernel_w"] = k;
    n.attrs["stride_h"] = stride;
    n.attrs["stride_w"] = stride;
    n.attrs["padding"] = padding;
    if (with_weights) {
        n.weights.push_back(f32_weight({out_channels, in_channels, k, k}, WeightRole::Kernel, 100 + id));
        n.weights.push_back(f32_weight({out_channels}, WeightRole::Bias, 200 + id));
    }
    return n;
}

LayerNode depthwise_node(NodeId id, std::string name, std::int64_t channels, std::int64_t k, std::int64_t stride,
                         const std::string& padding, bool with_weights) {
    LayerNode n{id, std::move(name), OpType::of(OpKind::DepthwiseConv2d), {}, {}};
    n.attrs["kernel_h"] = k;
    n.attrs["kernel_w"] = k;
    n.attrs["stride_h"] = stride;
    n.attrs["stride_w"] = stride;
    n.attrs["padding"] = padding;
    if (with_weights) n.weights.push_back(f32_weight({channels, 1, k, k}, WeightRole::Kernel, 300 + id));
    return n;
}

LayerNode dense_node(NodeId id, std::string name, std::int64_t in_features, std::int64_t units, bool bias,
                     std::uint64_t seed) {
    LayerNode n{id, std::move(name), OpType::of(OpKind::Dense), {}, {}};
    n.attrs["units"] = units;
    n.attrs["in_features"] = in_features;
    n.weights.push_back(f32_weight({units, in_features}, WeightRole::Kernel, seed * 1000 + id));
    if (bias) n.weights.push_back(f32_weight({units}, WeightRole::Bias, seed * 1000 + 500 + id));
    return n;
}

LayerNode simple_node(NodeId id, std::string name, OpKind kind) {
    return LayerNode{id, std::move(name), OpType::of(kind), {}, {}};
}

ModelGraph chain(std::vector<LayerNode> nodes, Shape input_shape, Layout layout) {
    ModelGraph g;
    g.framework = "native";
    g.layout = layout;
    for (std::size_t i = 1; i < nodes.size(); ++i) g.edges.push_back({nodes[i - 1].id, nodes[i].id, 0});
    g.inputs.push_back({nodes.front().id, 0, std::move(input_shape)});
    g.outputs.push_back(nodes.back().id);
    g.nodes = std::move(nodes);
    return g;
}

int run_command(const std::string& command) {
    const int status = std::system(command.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

}  // namespace prospector::testing
