// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "prospector/corpus.hpp"
#include "prospector/tables.hpp"
#include "prospector/zip.hpp"
#include "support.hpp"

namespace prospector {
namespace {

using testing::make_zip;
using testing::TempDir;
using testing::ZipMember;

Bytes sample_payload(std::size_t n) {
    Bytes b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>((i * 7) % 13);
    return b;
}

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

TEST(Zip, StoredAndDeflatedEntriesRoundTrip) {
    const auto a = sample_payload(1000);
    const auto b = sample_payload(33);
    auto zip = ZipArchive::open_memory(make_zip({{"a.bin", a, true}, {"dir/b.bin", b, false}}));
    ASSERT_EQ(zip.entries().size(), 2u);
    EXPECT_EQ(zip.entries()[0].name, "a.bin");
    EXPECT_EQ(zip.entries()[0].method, 8);
    EXPECT_EQ(zip.entries()[1].method, 0);
    EXPECT_EQ(zip.entries()[0].uncompressed_size, 1000u);
    EXPECT_EQ(zip.extract(zip.entries()[0]), a);
    EXPECT_EQ(zip.extract(zip.entries()[1]), b);
}

TEST(Zip, EmptyArchiveHasNoEntries) {
    auto zip = ZipArchive::open_memory(make_zip({}));
    EXPECT_TRUE(zip.entries().empty());
}

TEST(Zip, GarbageIsNotAnArchive) {
    EXPECT_EQ(code_of([] { ZipArchive::open_memory(to_bytes("definitely not a zip file")); }),
              ErrorCode::NotAnArchive);
}

TEST(Zip, CorruptPayloadFailsCrc) {
    auto bytes = make_zip({{"a.bin", sample_payload(64), false}});
    bytes[30 + 5 + 10] ^= 0xFF;  // inside the stored payload
    auto zip = ZipArchive::open_memory(bytes);
    EXPECT_EQ(code_of([&] { zip.extract(zip.entries()[0]); }), ErrorCode::DecompressFailure);
}

TEST(Zip, BrokenCentralDirectoryIsCorrupt) {
    auto bytes = make_zip({{"a.bin", sample_payload(64), false}});
    // Point the directory offset past the end of the file.
    const auto eocd = bytes.size() - 22;
    bytes[eocd + 16] = 0xFF;
    bytes[eocd + 17] = 0xFF;
    EXPECT_EQ(code_of([&] { ZipArchive::open_memory(bytes); }), ErrorCode::CorruptArchive);
}

TEST(ClassifyEntry, Kinds) {
    EXPECT_EQ(classify_entry("classes.dex"), EntryKind::Dex);
    EXPECT_EQ(classify_entry("classes2.dex"), EntryKind::Dex);
    EXPECT_EQ(classify_entry("lib/arm64-v8a/libtensorflowlite_jni.so"), EntryKind::NativeLib);
    EXPECT_EQ(classify_entry("assets/libfake.so"), EntryKind::Regular);
    EXPECT_EQ(classify_entry("assets/"), EntryKind::Other);
    EXPECT_EQ(classify_entry("assets/model.tflite"), EntryKind::Regular);
}

TEST(Corpus, IngestReadsEntriesAndSidecar) {
    TempDir dir;
    write_file(dir / "com.test.app.apk",
               ByteView(make_zip({{"classes.dex", testing::make_dex({"x"}), true},
                                  {"assets/Model.TFLITE", sample_payload(16), true},
                                  {"lib/x86/libncnn.so", sample_payload(8), false}})));
    write_file(dir / "com.test.app.meta.json", std::string_view(R"({"category": "tools", "rank": 3})"));
    const auto pkg = ingest_package(dir / "com.test.app.apk");
    EXPECT_EQ(pkg.id, "com.test.app");
    ASSERT_EQ(pkg.entries.size(), 3u);
    EXPECT_EQ(pkg.entries[0].kind, EntryKind::Dex);
    EXPECT_EQ(pkg.entries[2].kind, EntryKind::NativeLib);
    EXPECT_EQ(pkg.metadata.at("category"), "tools");
    EXPECT_EQ(pkg.metadata.at("rank"), "3");
    ASSERT_NE(pkg.find("assets/Model.TFLITE"), nullptr);
    EXPECT_EQ(pkg.find("missing"), nullptr);
    EXPECT_EQ(extract_entry(pkg, "assets/Model.TFLITE"), sample_payload(16));
    EXPECT_EQ(code_of([&] { extract_entry(pkg, "missing"); }), ErrorCode::EntryNotFound);

    const auto cands = enumerate_candidates(pkg, FormatTable::builtin());
    const bool has_tflite = std::any_of(cands.begin(), cands.end(), [](const ModelCandidate& c) {
        return c.framework == "tflite" && c.entry_name == "assets/Model.TFLITE" && c.extension == ".tflite";
    });
    EXPECT_TRUE(has_tflite);
    for (const auto& c : cands) EXPECT_NE(c.entry_name, "classes.dex");
}

TEST(Corpus, CandidatesPerFrameworkUseLongestExtension) {
    TempDir dir;
    write_file(dir / "p.apk", ByteView(make_zip({{"assets/w.pth.tar", sample_payload(4), false}})));
    const auto pkg = ingest_package(dir / "p.apk");
    const auto cands = enumerate_candidates(pkg, FormatTable::builtin());
    auto it = std::find_if(cands.begin(), cands.end(), [](const auto& c) { return c.framework == "pytorch"; });
    ASSERT_NE(it, cands.end());
    EXPECT_EQ(it->extension, ".pth.tar");
    EXPECT_EQ(std::count_if(cands.begin(), cands.end(), [](const auto& c) { return c.framework == "pytorch"; }), 1);
}

TEST(Corpus, BadSidecarIsConfigError) {
    TempDir dir;
    write_file(dir / "p.apk", ByteView(make_zip({})));
    write_file(dir / "p.meta.json", std::string_view("[1,2]"));
    EXPECT_EQ(code_of([&] { ingest_package(dir / "p.apk"); }), ErrorCode::Config);
}

TEST(Corpus, ListCorpusFiltersAndSorts) {
    TempDir dir;
    for (auto name : {"b.apk", "a.obb", "c.zip", "notes.txt", "d.meta.json"}) {
        write_file(dir / name, std::string_view("x"));
    }
    std::filesystem::create_directory(dir / "sub.apk");
    const auto files = list_corpus(dir.path());
    std::vector<std::string> names;
    for (const auto& f : files) names.push_back(f.filename().string());
    EXPECT_EQ(names, (std::vector<std::string>{"a.obb", "b.apk", "c.zip"}));
    EXPECT_EQ(code_of([&] { list_corpus(dir / "missing"); }), ErrorCode::Io);
}

TEST(Corpus, FixtureCorpusOpens) {
    const auto files = list_corpus(testing::fixture_dir() / "corpus");
    EXPECT_EQ(files.size(), 9u);
    std::int64_t opened = 0;
    for (const auto& f : files) {
        try {
            ingest_package(f);
            ++opened;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::NotAnArchive) << f;
        }
    }
    EXPECT_EQ(opened, 8);
}

}  // namespace
}  // namespace prospector
