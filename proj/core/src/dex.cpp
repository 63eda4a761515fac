// SPDX-License-Identifier: Apache-2.0
#include "prospector/dex.hpp"

#include <cctype>
#include <optional>

#include <fmt/format.h>

namespace prospector {

namespace {

constexpr std::size_t k_header_size = 0x70;
constexpr std::size_t k_string_ids_size = 0x38;
constexpr std::size_t k_string_ids_off = 0x3C;

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

/// Decodes NUL-terminated MUTF-8 into UTF-16 code units.
std::optional<std::vector<std::uint16_t>> decode_units(ByteView bytes) {
    std::vector<std::uint16_t> units;
    std::size_t i = 0;
    while (i < bytes.size()) {
        const std::uint8_t a = bytes[i];
        if (a < 0x80) {
            if (a == 0) return std::nullopt;
            units.push_back(a);
            i += 1;
        } else if ((a & 0xE0) == 0xC0) {
            if (i + 1 >= bytes.size() || (bytes[i + 1] & 0xC0) != 0x80) return std::nullopt;
            units.push_back(static_cast<std::uint16_t>(((a & 0x1F) << 6) | (bytes[i + 1] & 0x3F)));
            i += 2;
        } else if ((a & 0xF0) == 0xE0) {
            if (i + 2 >= bytes.size() || (bytes[i + 1] & 0xC0) != 0x80 || (bytes[i + 2] & 0xC0) != 0x80) {
                return std::nullopt;
            }
            units.push_back(static_cast<std::uint16_t>(((a & 0x0F) << 12) | ((bytes[i + 1] & 0x3F) << 6) |
                                                       (bytes[i + 2] & 0x3F)));
            i += 3;
        } else {
            return std::nullopt;
        }
    }
    return units;
}

std::string units_to_utf8(const std::vector<std::uint16_t>& units) {
    std::string out;
    out.reserve(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
        const std::uint32_t u = units[i];
        if (u >= 0xD800 && u <= 0xDBFF && i + 1 < units.size() && units[i + 1] >= 0xDC00 && units[i + 1] <= 0xDFFF) {
            append_utf8(out, 0x10000 + ((u - 0xD800) << 10) + (units[i + 1] - 0xDC00));
            ++i;
        } else {
            append_utf8(out, u);
        }
    }
    return out;
}

}  // namespace

bool has_dex_magic(ByteView data) noexcept {
    if (data.size() < 8) return false;
    return data[0] == 'd' && data[1] == 'e' && data[2] == 'x' && data[3] == '\n' &&
           std::isdigit(data[4]) && std::isdigit(data[5]) && std::isdigit(data[6]) && data[7] == 0;
}

std::vector<std::string> extract_dex_strings(ByteView dex) {
    if (!has_dex_magic(dex)) throw Error(ErrorCode::NotDex, "missing dex magic");
    if (dex.size() < k_header_size) {
        throw Error(ErrorCode::TruncatedDex, fmt::format("{}-byte file is shorter than the dex header", dex.size()));
    }
    ByteReader r(dex, ErrorCode::TruncatedDex);
    const auto count = r.read_at<std::uint32_t>(k_string_ids_size);
    const auto table = r.read_at<std::uint32_t>(k_string_ids_off);
    if (count == 0) return {};
    r.view_at(table, static_cast<std::size_t>(count) * 4);

    std::vector<std::string> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto data_off = r.read_at<std::uint32_t>(table + 4 * static_cast<std::size_t>(i));
        r.seek(data_off);
        const auto utf16_len = r.read_uleb128();
        const auto start = r.pos();
        std::size_t end = start;
        while (true) {
            if (end >= dex.size()) {
                throw Error(ErrorCode::TruncatedDex, fmt::format("string {} runs past the end of the file", i));
            }
            if (dex[end] == 0) break;
            ++end;
        }
        const auto raw = dex.subspan(start, end - start);
        auto units = decode_units(raw);
        if (units && units->size() == utf16_len) {
            out.push_back(units_to_utf8(*units));
        } else {
            out.emplace_back(as_chars(raw));
        }
    }
    return out;
}

}  // namespace prospector
