// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "prospector/bytes.hpp"

namespace prospector {

struct ZipEntryInfo {
    std::string name;
    std::uint64_t uncompressed_size = 0;
    std::uint64_t compressed_size = 0;
    std::uint16_t method = 0;  // 0 stored, 8 deflate
    std::uint16_t flags = 0;
    std::uint32_t crc32 = 0;
    std::uint64_t local_header_offset = 0;
};

/// Read-only zip container over a file or an in-memory buffer. Opening reads
/// only the central directory; payloads are inflated on demand.
class ZipArchive {
public:
    /// Throws NotAnArchive when no end-of-central-directory record exists and
    /// CorruptArchive when the directory cannot be walked.
    static ZipArchive open_file(const std::filesystem::path& path);
    static ZipArchive open_memory(Bytes data);

    const std::vector<ZipEntryInfo>& entries() const noexcept { return entries_; }

    /// Decompressed payload; throws DecompressFailure on bad method, size or CRC.
    Bytes extract(const ZipEntryInfo& entry) const;

    class Source;

private:
    explicit ZipArchive(std::shared_ptr<const Source> source);
    void read_directory();

    std::shared_ptr<const Source> source_;
    std::vector<ZipEntryInfo> entries_;
};

}  // namespace prospector
