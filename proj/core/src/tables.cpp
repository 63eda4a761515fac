// SPDX-License-Identifier: Apache-2.0
#include "prospector/tables.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>
#include <json.hpp>

namespace prospector {

namespace embedded {
extern const std::string_view k_formats;
extern const std::string_view k_ops;
extern const std::string_view k_api_patterns;
extern const std::string_view k_native_libs;
}  // namespace embedded

namespace {

using nlohmann::json;

json parse_table(std::string_view text, std::string_view what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Config, fmt::format("{} table: {}", what, e.what()));
    }
}

[[noreturn]] void bad(std::string_view what, const std::string& detail) {
    throw Error(ErrorCode::Config, fmt::format("{} table: {}", what, detail));
}

Bytes hex_to_bytes(std::string_view hex, std::string_view rule_id) {
    if (hex.size() % 2 != 0) bad("formats", fmt::format("rule {}: odd-length hex", rule_id));
    Bytes out;
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        auto nibble = [&](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            bad("formats", fmt::format("rule {}: bad hex digit '{}'", rule_id, c));
        };
        out.push_back(static_cast<std::uint8_t>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
    }
    return out;
}

WireType wire_type_from(const std::string& name, std::string_view rule_id) {
    if (name == "varint") return WireType::Varint;
    if (name == "fixed64") return WireType::Fixed64;
    if (name == "len") return WireType::Len;
    if (name == "fixed32") return WireType::Fixed32;
    bad("formats", fmt::format("rule {}: unknown wire type '{}'", rule_id, name));
}

SignatureRule parse_rule(const json& j, const FrameworkId& framework) {
    SignatureRule rule;
    rule.id = j.at("id").get<std::string>();
    rule.framework = framework;
    const auto kind = j.at("matcher").get<std::string>();
    if (kind == "magic_at_offset") {
        MagicAtOffset m;
        const auto offset = j.value("offset", std::int64_t{0});
        if (offset < 0) bad("formats", fmt::format("rule {}: negative offset", rule.id));
        m.offset = static_cast<std::size_t>(offset);
        if (j.contains("hex")) {
            m.magic = hex_to_bytes(j["hex"].get<std::string>(), rule.id);
        } else {
            m.magic = to_bytes(j.at("text").get<std::string>());
        }
        if (m.magic.empty()) bad("formats", fmt::format("rule {}: empty magic", rule.id));
        rule.matcher = std::move(m);
    } else if (kind == "text_prefix") {
        rule.matcher = TextPrefix{j.at("prefix").get<std::string>()};
    } else if (kind == "keyword_set") {
        KeywordSet k;
        k.any_of = j.value("any_of", std::vector<std::string>{});
        k.all_of = j.value("all_of", std::vector<std::string>{});
        if (k.any_of.empty() && k.all_of.empty()) {
            bad("formats", fmt::format("rule {}: keyword set is empty", rule.id));
        }
        rule.matcher = std::move(k);
    } else if (kind == "structured_probe") {
        StructuredProbe p;
        p.probe = j.at("probe").get<std::string>();
        if (j.contains("fields")) {
            for (const auto& [num, type] : j["fields"].items()) {
                p.fields[static_cast<std::uint32_t>(std::stoul(num))] =
                    wire_type_from(type.get<std::string>(), rule.id);
            }
        }
        p.require = j.value("require", std::vector<std::uint32_t>{});
        p.require_any = j.value("require_any", std::vector<std::uint32_t>{});
        p.allow_unknown = j.value("allow_unknown", true);
        p.member = j.value("member", std::string{});
        rule.matcher = std::move(p);
    } else {
        bad("formats", fmt::format("rule {}: unknown matcher '{}'", rule.id, kind));
    }
    return rule;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

FormatTable FormatTable::from_json(std::string_view text) {
    const json doc = parse_table(text, "formats");
    FormatTable table;
    try {
        for (const auto& fj : doc.at("frameworks")) {
            FrameworkFormat fw;
            fw.id = fj.at("id").get<std::string>();
            fw.display_name = fj.value("name", fw.id);
            for (const auto& ext : fj.at("extensions")) {
                auto e = lower(ext.get<std::string>());
                if (e.empty() || e.front() != '.') {
                    bad("formats", fmt::format("{}: extension '{}' lacks leading dot", fw.id, e));
                }
                fw.extensions.push_back(std::move(e));
            }
            for (const auto& rj : fj.value("rules", json::array())) {
                fw.rules.push_back(parse_rule(rj, fw.id));
            }
            if (table.find(fw.id) != nullptr) {
                bad("formats", fmt::format("duplicate framework '{}'", fw.id));
            }
            table.frameworks_.push_back(std::move(fw));
        }
    } catch (const json::exception& e) {
        bad("formats", e.what());
    }
    return table;
}

FormatTable FormatTable::load(const std::filesystem::path& path) {
    return from_json(read_text_file(path));
}

const FormatTable& FormatTable::builtin() {
    static const FormatTable table = from_json(embedded::k_formats);
    return table;
}

const FrameworkFormat* FormatTable::find(std::string_view framework) const noexcept {
    for (const auto& fw : frameworks_) {
        if (fw.id == framework) return &fw;
    }
    return nullptr;
}

std::vector<SignatureRule> FormatTable::all_rules() const {
    std::vector<SignatureRule> rules;
    for (const auto& fw : frameworks_) {
        rules.insert(rules.end(), fw.rules.begin(), fw.rules.end());
    }
    return rules;
}

OpTable OpTable::from_json(std::string_view text) {
    const json doc = parse_table(text, "ops");
    OpTable table;
    try {
        for (const auto& [framework, ops] : doc.items()) {
            if (!ops.is_object()) continue;  // "version", "note"
            auto& dest = table.table_[framework];
            for (const auto& [source, target] : ops.items()) {
                OpMapping m;
                std::string name;
                if (target.is_string()) {
                    name = target.get<std::string>();
                } else {
                    name = target.at("op").get<std::string>();
                    m.shape_rule = target.value("shape", std::string{});
                }
                auto kind = op_kind_from_string(name);
                if (!kind) bad("ops", fmt::format("{}/{}: unknown canonical op '{}'", framework, source, name));
                m.kind = *kind;
                dest.emplace(source, std::move(m));
            }
        }
    } catch (const json::exception& e) {
        bad("ops", e.what());
    }
    return table;
}

OpTable OpTable::load(const std::filesystem::path& path) { return from_json(read_text_file(path)); }

const OpTable& OpTable::builtin() {
    static const OpTable table = from_json(embedded::k_ops);
    return table;
}

OpType OpTable::canonicalize(std::string_view framework, std::string_view source_op,
                             std::string* shape_rule) const {
    if (shape_rule) shape_rule->clear();
    auto fw = table_.find(framework);
    if (fw != table_.end()) {
        auto it = fw->second.find(source_op);
        if (it != fw->second.end()) {
            if (shape_rule) *shape_rule = it->second.shape_rule;
            if (it->second.kind == OpKind::Other) return OpType::other(std::string(source_op));
            return OpType::of(it->second.kind);
        }
    }
    return OpType::other(std::string(source_op));
}

std::string_view to_string(ApiVendor vendor) noexcept {
    switch (vendor) {
        case ApiVendor::GoogleFirebase: return "google_firebase";
        case ApiVendor::GoogleCloud: return "google_cloud";
        case ApiVendor::AmazonAws: return "amazon_aws";
    }
    return "?";
}

std::optional<ApiVendor> api_vendor_from_string(std::string_view text) noexcept {
    for (auto v : {ApiVendor::GoogleFirebase, ApiVendor::GoogleCloud, ApiVendor::AmazonAws}) {
        if (to_string(v) == text) return v;
    }
    return std::nullopt;
}

ApiPatternTable ApiPatternTable::from_json(std::string_view text) {
    const json doc = parse_table(text, "api_patterns");
    ApiPatternTable table;
    try {
        for (const auto& [vendor, patterns] : doc.at("vendors").items()) {
            auto v = api_vendor_from_string(vendor);
            if (!v) bad("api_patterns", fmt::format("unknown vendor '{}'", vendor));
            auto& dest = table.patterns_[*v];
            for (const auto& p : patterns) {
                auto s = p.get<std::string>();
                if (s.empty()) bad("api_patterns", "empty pattern");
                dest.push_back(std::move(s));
            }
        }
    } catch (const json::exception& e) {
        bad("api_patterns", e.what());
    }
    return table;
}

ApiPatternTable ApiPatternTable::load(const std::filesystem::path& path) {
    return from_json(read_text_file(path));
}

const ApiPatternTable& ApiPatternTable::builtin() {
    static const ApiPatternTable table = from_json(embedded::k_api_patterns);
    return table;
}

NativeLibTable NativeLibTable::from_json(std::string_view text) {
    const json doc = parse_table(text, "native_libs");
    NativeLibTable table;
    try {
        for (const auto& [prefix, framework] : doc.at("libraries").items()) {
            table.prefixes_[prefix] = framework.get<std::string>();
        }
    } catch (const json::exception& e) {
        bad("native_libs", e.what());
    }
    return table;
}

NativeLibTable NativeLibTable::load(const std::filesystem::path& path) {
    return from_json(read_text_file(path));
}

const NativeLibTable& NativeLibTable::builtin() {
    static const NativeLibTable table = from_json(embedded::k_native_libs);
    return table;
}

std::optional<FrameworkId> NativeLibTable::match(std::string_view base_name) const {
    const std::string* best_prefix = nullptr;
    const FrameworkId* best = nullptr;
    for (const auto& [prefix, framework] : prefixes_) {
        if (base_name.starts_with(prefix) &&
            (best_prefix == nullptr || prefix.size() > best_prefix->size())) {
            best_prefix = &prefix;
            best = &framework;
        }
    }
    if (best == nullptr) return std::nullopt;
    return *best;
}

}  // namespace prospector
