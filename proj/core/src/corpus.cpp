// SPDX-License-Identifier: Apache-2.0
#include "prospector/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "prospector/zip.hpp"

namespace prospector {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::map<std::string, std::string> read_sidecar(const std::filesystem::path& path) {
    std::map<std::string, std::string> out;
    if (!std::filesystem::exists(path)) return out;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, fmt::format("{}: {}", path.string(), e.what()));
    }
    if (!doc.is_object()) {
        throw Error(ErrorCode::Config, path.string() + ": metadata sidecar must be a JSON object");
    }
    for (const auto& [key, value] : doc.items()) {
        out[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    return out;
}

}  // namespace

std::string_view to_string(EntryKind kind) noexcept {
    switch (kind) {
        case EntryKind::Regular: return "regular";
        case EntryKind::Dex: return "dex";
        case EntryKind::NativeLib: return "native_lib";
        case EntryKind::Other: return "other";
    }
    return "?";
}

EntryKind classify_entry(std::string_view name) noexcept {
    if (name.empty() || name.back() == '/') return EntryKind::Other;
    if (name.ends_with(".dex")) return EntryKind::Dex;
    // lib/<abi>/lib<name>.so with exactly one directory level for the ABI
    if (name.starts_with("lib/") && name.ends_with(".so")) {
        const auto rest = name.substr(4);
        const auto slash = rest.find('/');
        if (slash != std::string_view::npos && slash > 0 && rest.find('/', slash + 1) == std::string_view::npos) {
            const auto file = rest.substr(slash + 1);
            if (file.starts_with("lib") && file.size() > 6) return EntryKind::NativeLib;
        }
    }
    return EntryKind::Regular;
}

const ArchiveEntry* AppPackage::find(std::string_view name) const noexcept {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

AppPackage ingest_package(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::Io, path.string() + " is not a regular file");
    }
    auto archive = std::make_shared<const ZipArchive>(ZipArchive::open_file(path));

    AppPackage pkg;
    pkg.id = path.stem().string();
    pkg.path = path;
    std::set<std::string_view> seen;
    for (const auto& info : archive->entries()) {
        if (!seen.insert(info.name).second) {
            throw Error(ErrorCode::CorruptArchive,
                        fmt::format("{}: duplicate entry '{}'", path.string(), info.name));
        }
        pkg.entries.push_back({info.name, info.uncompressed_size, classify_entry(info.name)});
    }
    pkg.archive = std::move(archive);
    pkg.metadata = read_sidecar(path.parent_path() / (pkg.id + ".meta.json"));
    return pkg;
}

std::vector<ModelCandidate> enumerate_candidates(const AppPackage& pkg, const FormatTable& table) {
    std::vector<ModelCandidate> out;
    for (const auto& entry : pkg.entries) {
        if (entry.kind != EntryKind::Regular) continue;
        const std::string name = lower(entry.name);
        for (const auto& fw : table.frameworks()) {
            const std::string* best = nullptr;
            for (const auto& ext : fw.extensions) {
                if (name.size() > ext.size() && name.ends_with(ext) &&
                    (best == nullptr || ext.size() > best->size())) {
                    best = &ext;
                }
            }
            if (best) out.push_back({pkg.id, entry.name, fw.id, *best});
        }
    }
    return out;
}

Bytes extract_entry(const AppPackage& pkg, std::string_view name) {
    if (!pkg.archive) {
        throw Error(ErrorCode::EntryNotFound, fmt::format("{}: package has no open archive", pkg.id));
    }
    for (const auto& info : pkg.archive->entries()) {
        if (info.name == name) return pkg.archive->extract(info);
    }
    throw Error(ErrorCode::EntryNotFound, fmt::format("{}: no entry '{}'", pkg.id, name));
}

std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& corpus_dir) {
    if (!std::filesystem::is_directory(corpus_dir)) {
        throw Error(ErrorCode::Io, corpus_dir.string() + " is not a directory");
    }
    std::vector<std::filesystem::path> out;
    for (const auto& de : std::filesystem::directory_iterator(corpus_dir)) {
        if (!de.is_regular_file()) continue;
        const auto ext = lower(de.path().extension().string());
        if (ext == ".apk" || ext == ".obb" || ext == ".zip") out.push_back(de.path());
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.stem().string() < b.stem().string() ||
               (a.stem().string() == b.stem().string() && a.filename() < b.filename());
    });
    return out;
}

}  // namespace prospector
