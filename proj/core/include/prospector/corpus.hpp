// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "prospector/bytes.hpp"
#include "prospector/tables.hpp"

namespace prospector {

class ZipArchive;

enum class EntryKind { Regular, Dex, NativeLib, Other };
std::string_view to_string(EntryKind kind) noexcept;

/// dex iff the name ends in ".dex"; native_lib iff it matches lib/*/lib*.so;
/// other for directory records; regular otherwise.
EntryKind classify_entry(std::string_view name) noexcept;

struct ArchiveEntry {
    std::string name;
    std::uint64_t size_bytes = 0;
    EntryKind kind = EntryKind::Regular;
    friend bool operator==(const ArchiveEntry&, const ArchiveEntry&) = default;
};

/// An opened app archive. Entries are listed in central-directory order.
struct AppPackage {
    std::string id;  // file stem
    std::filesystem::path path;
    std::vector<ArchiveEntry> entries;
    std::map<std::string, std::string> metadata;  // from <id>.meta.json
    std::shared_ptr<const ZipArchive> archive;

    const ArchiveEntry* find(std::string_view name) const noexcept;

    friend bool operator==(const AppPackage& a, const AppPackage& b) {
        return a.id == b.id && a.path == b.path && a.entries == b.entries && a.metadata == b.metadata;
    }
};

struct ModelCandidate {
    std::string package_id;
    std::string entry_name;
    FrameworkId framework;
    std::string extension;
    friend auto operator<=>(const ModelCandidate&, const ModelCandidate&) = default;
};

/// Enumerates the central directory without inflating payloads. Reads the
/// optional `<id>.meta.json` sidecar next to the package.
AppPackage ingest_package(const std::filesystem::path& path);

/// One candidate per (entry, framework) whose extension list matches the
/// entry name (case-insensitive, longest extension per framework).
std::vector<ModelCandidate> enumerate_candidates(const AppPackage& pkg, const FormatTable& table);

/// Throws EntryNotFound or DecompressFailure.
Bytes extract_entry(const AppPackage& pkg, std::string_view name);

/// Package files (.apk, .obb, .zip) directly under `corpus_dir`, sorted by id.
std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& corpus_dir);

}  // namespace prospector
