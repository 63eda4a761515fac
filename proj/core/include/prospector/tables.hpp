// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "prospector/bytes.hpp"
#include "prospector/ir.hpp"

namespace prospector {


enum class WireType : std::uint8_t { Varint = 0, Fixed64 = 1, Len = 2, StartGroup = 3, EndGroup = 4, Fixed32 = 5 };

struct MagicAtOffset {
    std::size_t offset = 0;
    Bytes magic;
};

struct TextPrefix {
    std::string prefix;
};

/// Text content holding every `all_of` substring and at least one `any_of`
/// keyword as a whole word.
struct KeywordSet {
    std::vector<std::string> any_of;
    std::vector<std::string> all_of;
};

/// Named structural check. Parameters unused by a probe are left empty.
struct StructuredProbe {
    std::string probe;  // "protobuf", "zip_member", "native_json"
    std::map<std::uint32_t, WireType> fields;
    std::vector<std::uint32_t> require;
    std::vector<std::uint32_t> require_any;
    bool allow_unknown = true;
    std::string member;
};

using Matcher = std::variant<MagicAtOffset, TextPrefix, KeywordSet, StructuredProbe>;

struct SignatureRule {
    std::string id;
    FrameworkId framework;
    Matcher matcher;
};

struct FrameworkFormat {
    FrameworkId id;
    std::string display_name;
    std::vector<std::string> extensions;  // lower case, leading dot
    std::vector<SignatureRule> rules;
};

/// Framework -> extensions and signature rules, loaded from formats.json.
class FormatTable {
public:
    static FormatTable from_json(std::string_view text);
    static FormatTable load(const std::filesystem::path& path);
    static const FormatTable& builtin();

    const std::vector<FrameworkFormat>& frameworks() const noexcept { return frameworks_; }
    const FrameworkFormat* find(std::string_view framework) const noexcept;
    std::vector<SignatureRule> all_rules() const;

private:
    std::vector<FrameworkFormat> frameworks_;
};

struct OpMapping {
    OpKind kind = OpKind::Other;
    std::string shape_rule;  // empty = the kind's default rule
};

/// Source op name -> canonical op per framework, loaded from ops.json.
class OpTable {
public:
    static OpTable from_json(std::string_view text);
    static OpTable load(const std::filesystem::path& path);
    static const OpTable& builtin();

    /// Unlisted ops map to other(source_op).
    OpType canonicalize(std::string_view framework, std::string_view source_op,
                        std::string* shape_rule = nullptr) const;

private:
    std::map<std::string, std::map<std::string, OpMapping, std::less<>>, std::less<>> table_;
};

enum class ApiVendor { GoogleFirebase, GoogleCloud, AmazonAws };
std::string_view to_string(ApiVendor vendor) noexcept;
std::optional<ApiVendor> api_vendor_from_string(std::string_view text) noexcept;

class ApiPatternTable {
public:
    static ApiPatternTable from_json(std::string_view text);
    static ApiPatternTable load(const std::filesystem::path& path);
    static const ApiPatternTable& builtin();

    const std::map<ApiVendor, std::vector<std::string>>& patterns() const noexcept {
        return patterns_;
    }

private:
    std::map<ApiVendor, std::vector<std::string>> patterns_;
};

class NativeLibTable {
public:
    static NativeLibTable from_json(std::string_view text);
    static NativeLibTable load(const std::filesystem::path& path);
    static const NativeLibTable& builtin();

    /// Longest library prefix matching the base name, if any.
    std::optional<FrameworkId> match(std::string_view base_name) const;

private:
    std::map<std::string, FrameworkId> prefixes_;
};

/// The four tables a run needs; any of them may be overridden by path.
struct Tables {
    FormatTable formats = FormatTable::builtin();
    OpTable ops = OpTable::builtin();
    ApiPatternTable api_patterns = ApiPatternTable::builtin();
    NativeLibTable native_libs = NativeLibTable::builtin();
};

}  // namespace prospector
