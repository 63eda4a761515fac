// SPDX-License-Identifier: Apache-2.0
#include "prospector/detect.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>

#include <json.hpp>

#include "prospector/protowire.hpp"
#include "prospector/zip.hpp"

namespace prospector {

namespace {

constexpr std::size_t k_text_sniff = 64 * 1024;

bool looks_like_text(std::string_view text) {
    const auto head = text.substr(0, k_text_sniff);
    return head.find('\0') == std::string_view::npos;
}

bool is_ident(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool contains_word(std::string_view text, std::string_view word) {
    for (auto pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
        const bool left = pos == 0 || !is_ident(text[pos - 1]);
        const auto end = pos + word.size();
        const bool right = end == text.size() || !is_ident(text[end]);
        if (left && right) return true;
    }
    return false;
}

std::string_view strip_bom(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    return text;
}

bool match(const MagicAtOffset& m, ByteView bytes) {
    return bytes.size() >= m.offset + m.magic.size() &&
           std::memcmp(bytes.data() + m.offset, m.magic.data(), m.magic.size()) == 0;
}

bool match(const TextPrefix& m, ByteView bytes) {
    const auto text = strip_bom(as_chars(bytes));
    if (!text.starts_with(m.prefix)) return false;
    if (text.size() == m.prefix.size()) return true;
    return std::isspace(static_cast<unsigned char>(text[m.prefix.size()])) != 0;
}

bool match(const KeywordSet& m, ByteView bytes) {
    const auto text = as_chars(bytes);
    if (!looks_like_text(text)) return false;
    for (const auto& s : m.all_of) {
        if (text.find(s) == std::string_view::npos) return false;
    }
    if (m.any_of.empty()) return true;
    return std::any_of(m.any_of.begin(), m.any_of.end(),
                       [&](const auto& w) { return contains_word(text, w); });
}

bool native_json_probe(ByteView bytes) {
    const auto text = as_chars(bytes);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos || text[first] != '{') return false;
    const auto doc = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
    return doc.is_object() && doc.contains("nodes") && doc["nodes"].is_array() &&
           doc.contains("edges") && doc["edges"].is_array() && doc.contains("inputs") &&
           doc.contains("outputs");
}

bool zip_member_probe(ByteView bytes, const std::string& member) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "PK", 2) != 0) return false;
    try {
        const auto zip = ZipArchive::open_memory(Bytes(bytes.begin(), bytes.end()));
        return std::any_of(zip.entries().begin(), zip.entries().end(), [&](const auto& e) {
            return e.name == member || e.name.ends_with("/" + member);
        });
    } catch (const Error&) {
        return false;
    }
}

bool match(const StructuredProbe& p, ByteView bytes) {
    if (p.probe == "protobuf") return protobuf_probe(bytes, p);
    if (p.probe == "zip_member") return zip_member_probe(bytes, p.member);
    if (p.probe == "native_json") return native_json_probe(bytes);
    return false;
}

}  // namespace

std::string_view to_string(Verdict verdict) noexcept {
    switch (verdict) {
        case Verdict::Valid: return "valid";
        case Verdict::Invalid: return "invalid";
        case Verdict::Unknown: return "unknown";
    }
    return "?";
}

std::vector<SignatureRule> builtin_rules() { return FormatTable::builtin().all_rules(); }

bool rule_matches(const SignatureRule& rule, ByteView bytes) {
    return std::visit([&](const auto& m) { return match(m, bytes); }, rule.matcher);
}

ValidationResult validate(ByteView bytes, std::string_view framework, const FormatTable& table) {
    ValidationResult result;
    result.candidate.framework = std::string(framework);
    const auto* fw = table.find(framework);
    if (fw == nullptr || fw->rules.empty()) {
        result.verdict = Verdict::Unknown;
        return result;
    }
    result.verdict = Verdict::Invalid;
    if (bytes.empty()) return result;
    for (const auto& rule : fw->rules) {
        if (rule_matches(rule, bytes)) {
            result.verdict = Verdict::Valid;
            result.rule_fired = rule.id;
            break;
        }
    }
    return result;
}

ValidationResult validate_candidate(const ModelCandidate& candidate, ByteView bytes,
                                    const FormatTable& table) {
    auto result = validate(bytes, candidate.framework, table);
    result.candidate = candidate;
    return result;
}

}  // namespace prospector
