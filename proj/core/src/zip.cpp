// SPDX-License-Identifier: Apache-2.0
#include "prospector/zip.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <optional>

#include <fmt/format.h>

namespace prospector {

namespace {

constexpr std::uint32_t k_local_sig = 0x04034b50;
constexpr std::uint32_t k_central_sig = 0x02014b50;
constexpr std::uint32_t k_eocd_sig = 0x06054b50;
constexpr std::uint32_t k_zip64_locator_sig = 0x07064b50;
constexpr std::uint32_t k_zip64_eocd_sig = 0x06064b50;
constexpr std::size_t k_eocd_size = 22;
constexpr std::size_t k_max_comment = 0xffff;

[[noreturn]] void corrupt(const std::string& msg) { throw Error(ErrorCode::CorruptArchive, msg); }

}  // namespace

class ZipArchive::Source {
public:
    virtual ~Source() = default;
    virtual std::uint64_t size() const = 0;
    /// Throws CorruptArchive when the range is outside the container.
    virtual Bytes read(std::uint64_t offset, std::uint64_t n) const = 0;
};

namespace {

class FileSource final : public ZipArchive::Source {
public:
    explicit FileSource(std::filesystem::path path) : path_(std::move(path)) {
        std::error_code ec;
        size_ = std::filesystem::file_size(path_, ec);
        if (ec) throw Error(ErrorCode::Io, fmt::format("cannot stat {}: {}", path_.string(), ec.message()));
    }

    std::uint64_t size() const override { return size_; }

    Bytes read(std::uint64_t offset, std::uint64_t n) const override {
        if (offset > size_ || n > size_ - offset) {
            corrupt(fmt::format("range [{}, +{}) beyond end of {}", offset, n, path_.string()));
        }
        std::ifstream in(path_, std::ios::binary);
        if (!in) throw Error(ErrorCode::Io, "cannot open " + path_.string());
        in.seekg(static_cast<std::streamoff>(offset));
        Bytes out(static_cast<std::size_t>(n));
        in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::uint64_t>(in.gcount()) != n) {
            throw Error(ErrorCode::Io, "short read from " + path_.string());
        }
        return out;
    }

private:
    std::filesystem::path path_;
    std::uint64_t size_ = 0;
};

class MemorySource final : public ZipArchive::Source {
public:
    explicit MemorySource(Bytes data) : data_(std::move(data)) {}

    std::uint64_t size() const override { return data_.size(); }

    Bytes read(std::uint64_t offset, std::uint64_t n) const override {
        if (offset > data_.size() || n > data_.size() - offset) {
            corrupt(fmt::format("range [{}, +{}) beyond end of buffer", offset, n));
        }
        const auto first = data_.begin() + static_cast<std::ptrdiff_t>(offset);
        return Bytes(first, first + static_cast<std::ptrdiff_t>(n));
    }

private:
    Bytes data_;
};

std::uint32_t crc_of(const Bytes& data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < data.size()) {
        const auto chunk = static_cast<uInt>(
            std::min<std::size_t>(data.size() - done, std::numeric_limits<uInt>::max()));
        crc = crc32(crc, data.data() + done, chunk);
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

Bytes inflate_raw(const Bytes& compressed, std::uint64_t expected_size, const std::string& name) {
    // One spare byte so an empty member still has a valid output pointer and
    // trailing garbage is detected as overflow.
    Bytes out(static_cast<std::size_t>(expected_size) + 1);
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
        throw Error(ErrorCode::DecompressFailure, "inflateInit2 failed");
    }
    zs.next_in = const_cast<Bytef*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    const auto produced = zs.total_out;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || produced != expected_size) {
        throw Error(ErrorCode::DecompressFailure,
                    fmt::format("{}: inflate returned {} after {} of {} bytes", name, rc, produced,
                                expected_size));
    }
    out.resize(static_cast<std::size_t>(expected_size));
    return out;
}

}  // namespace

ZipArchive::ZipArchive(std::shared_ptr<const Source> source) : source_(std::move(source)) {
    read_directory();
}

ZipArchive ZipArchive::open_file(const std::filesystem::path& path) {
    return ZipArchive(std::make_shared<FileSource>(path));
}

ZipArchive ZipArchive::open_memory(Bytes data) {
    return ZipArchive(std::make_shared<MemorySource>(std::move(data)));
}

void ZipArchive::read_directory() {
    const std::uint64_t size = source_->size();
    if (size < k_eocd_size) {
        throw Error(ErrorCode::NotAnArchive, fmt::format("{} bytes is too short for a zip", size));
    }
    const std::uint64_t tail_len = std::min<std::uint64_t>(size, k_eocd_size + k_max_comment);
    const Bytes tail = source_->read(size - tail_len, tail_len);

    // Scan backwards for the end-of-central-directory record whose comment
    // length reaches exactly to the end of the file.
    std::optional<std::size_t> eocd_at;
    for (std::size_t i = tail.size() - k_eocd_size + 1; i-- > 0;) {
        if (load_le<std::uint32_t>(&tail[i]) != k_eocd_sig) continue;
        const auto comment_len = load_le<std::uint16_t>(&tail[i + 20]);
        if (i + k_eocd_size + comment_len == tail.size()) {
            eocd_at = i;
            break;
        }
    }
    if (!eocd_at) {
        throw Error(ErrorCode::NotAnArchive, "no end-of-central-directory record");
    }

    const std::uint8_t* eocd = &tail[*eocd_at];
    std::uint64_t entry_count = load_le<std::uint16_t>(eocd + 10);
    std::uint64_t cd_size = load_le<std::uint32_t>(eocd + 12);
    std::uint64_t cd_offset = load_le<std::uint32_t>(eocd + 16);

    const bool needs_zip64 =
        entry_count == 0xffff || cd_size == 0xffffffff || cd_offset == 0xffffffff;
    if (needs_zip64) {
        const std::uint64_t eocd_abs = size - tail_len + *eocd_at;
        if (eocd_abs < 20) corrupt("zip64 locator missing");
        const Bytes locator = source_->read(eocd_abs - 20, 20);
        if (load_le<std::uint32_t>(locator.data()) != k_zip64_locator_sig) {
            corrupt("zip64 locator missing");
        }
        const auto z64_offset = load_le<std::uint64_t>(locator.data() + 8);
        const Bytes z64 = source_->read(z64_offset, 56);
        if (load_le<std::uint32_t>(z64.data()) != k_zip64_eocd_sig) corrupt("bad zip64 EOCD signature");
        entry_count = load_le<std::uint64_t>(z64.data() + 32);
        cd_size = load_le<std::uint64_t>(z64.data() + 40);
        cd_offset = load_le<std::uint64_t>(z64.data() + 48);
    }

    if (cd_offset > size || cd_size > size - cd_offset) {
        corrupt(fmt::format("central directory [{}, +{}) beyond {}-byte file", cd_offset, cd_size, size));
    }
    const Bytes cd = source_->read(cd_offset, cd_size);
    ByteReader r(cd, ErrorCode::CorruptArchive);

    entries_.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(entry_count, 1u << 20)));
    for (std::uint64_t i = 0; i < entry_count; ++i) {
        if (r.read<std::uint32_t>() != k_central_sig) {
            corrupt(fmt::format("central directory entry {} has a bad signature", i));
        }
        ZipEntryInfo e;
        r.skip(4);  // version made by, version needed
        e.flags = r.read<std::uint16_t>();
        e.method = r.read<std::uint16_t>();
        r.skip(4);  // mod time, mod date
        e.crc32 = r.read<std::uint32_t>();
        e.compressed_size = r.read<std::uint32_t>();
        e.uncompressed_size = r.read<std::uint32_t>();
        const auto name_len = r.read<std::uint16_t>();
        const auto extra_len = r.read<std::uint16_t>();
        const auto comment_len = r.read<std::uint16_t>();
        r.skip(8);  // disk start, internal attrs, external attrs
        e.local_header_offset = r.read<std::uint32_t>();
        const ByteView name = r.read_bytes(name_len);
        e.name.assign(name.begin(), name.end());

        ByteReader extra(r.read_bytes(extra_len), ErrorCode::CorruptArchive);
        while (extra.remaining() >= 4) {
            const auto id = extra.read<std::uint16_t>();
            const auto len = extra.read<std::uint16_t>();
            ByteReader field(extra.read_bytes(len), ErrorCode::CorruptArchive);
            if (id != 0x0001) continue;
            if (e.uncompressed_size == 0xffffffff) e.uncompressed_size = field.read<std::uint64_t>();
            if (e.compressed_size == 0xffffffff) e.compressed_size = field.read<std::uint64_t>();
            if (e.local_header_offset == 0xffffffff) e.local_header_offset = field.read<std::uint64_t>();
        }
        r.skip(comment_len);

        if (e.local_header_offset >= size) {
            corrupt(fmt::format("entry '{}' points past the end of the file", e.name));
        }
        entries_.push_back(std::move(e));
    }
}

Bytes ZipArchive::extract(const ZipEntryInfo& entry) const {
    if (entry.flags & 0x1) {
        throw Error(ErrorCode::DecompressFailure, entry.name + ": encrypted entries are not supported");
    }
    Bytes data;
    try {
        const Bytes local = source_->read(entry.local_header_offset, 30);
        if (load_le<std::uint32_t>(local.data()) != k_local_sig) {
            throw Error(ErrorCode::DecompressFailure, entry.name + ": bad local header signature");
        }
        const auto name_len = load_le<std::uint16_t>(local.data() + 26);
        const auto extra_len = load_le<std::uint16_t>(local.data() + 28);
        data = source_->read(entry.local_header_offset + 30 + name_len + extra_len,
                             entry.compressed_size);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::CorruptArchive) {
            throw Error(ErrorCode::DecompressFailure, e.what());
        }
        throw;
    }

    Bytes out;
    switch (entry.method) {
        case 0:
            if (data.size() != entry.uncompressed_size) {
                throw Error(ErrorCode::DecompressFailure, entry.name + ": stored size mismatch");
            }
            out = std::move(data);
            break;
        case 8:
            out = inflate_raw(data, entry.uncompressed_size, entry.name);
            break;
        default:
            throw Error(ErrorCode::DecompressFailure,
                        fmt::format("{}: unsupported compression method {}", entry.name, entry.method));
    }
    if (crc_of(out) != entry.crc32) {
        throw Error(ErrorCode::DecompressFailure, entry.name + ": CRC-32 mismatch");
    }
    return out;
}

}  // namespace prospector
