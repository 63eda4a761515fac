// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "prospector/error.hpp"

namespace prospector {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) noexcept {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string_view as_chars(ByteView b) noexcept {
    return {reinterpret_cast<const char*>(b.data()), b.size()};
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

Bytes read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never observe
/// a half-written file.
void write_file(const std::filesystem::path& path, ByteView data);
void write_file(const std::filesystem::path& path, std::string_view text);

template <typename T>
T load_le(const std::uint8_t* p) noexcept {
    static_assert(std::is_trivially_copyable_v<T>);
    T value;
    std::memcpy(&value, p, sizeof(T));
    return value;  // all supported hosts are little-endian
}

/// Bounds-checked little-endian cursor. Out-of-range reads throw an Error
/// with the code chosen by the owner (MalformedModel, TruncatedDex, ...).
class ByteReader {
public:
    ByteReader(ByteView data, ErrorCode on_overrun) : data_(data), overrun_(on_overrun) {}

    std::size_t size() const noexcept { return data_.size(); }
    std::size_t pos() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ >= data_.size(); }

    void seek(std::size_t pos) {
        require(pos, 0);
        pos_ = pos;
    }
    void skip(std::size_t n) {
        require(pos_, n);
        pos_ += n;
    }

    template <typename T>
    T read() {
        require(pos_, sizeof(T));
        T value = load_le<T>(data_.data() + pos_);
        pos_ += sizeof(T);
        return value;
    }

    template <typename T>
    T read_at(std::size_t pos) const {
        require(pos, sizeof(T));
        return load_le<T>(data_.data() + pos);
    }

    ByteView read_bytes(std::size_t n) {
        require(pos_, n);
        ByteView out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    ByteView view_at(std::size_t pos, std::size_t n) const {
        require(pos, n);
        return data_.subspan(pos, n);
    }

    std::uint64_t read_uleb128();

private:
    void require(std::size_t pos, std::size_t n) const {
        if (pos > data_.size() || n > data_.size() - pos) {
            throw Error(overrun_, "read of " + std::to_string(n) + " bytes at offset " +
                                      std::to_string(pos) + " exceeds " +
                                      std::to_string(data_.size()) + "-byte buffer");
        }
    }

    ByteView data_;
    std::size_t pos_ = 0;
    ErrorCode overrun_;
};

}  // namespace prospector
