// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "prospector/bytes.hpp"

namespace prospector::fb {

class Vector;

/// Bounds-checked view of a FlatBuffer table. Every out-of-range offset
/// throws MalformedModel.
class Table {
public:
    Table(ByteView buf, std::size_t pos);

    /// Root table of a finished buffer.
    static Table root(ByteView buf);

    template <typename T>
    T scalar(int field, T fallback) const {
        const auto off = field_offset(field);
        if (off == 0) return fallback;
        return ByteReader(buf_, ErrorCode::MalformedModel).read_at<T>(pos_ + off);
    }

    bool has(int field) const { return field_offset(field) != 0; }
    std::optional<Table> table(int field) const;
    std::optional<Vector> vector(int field) const;
    std::optional<std::string_view> string(int field) const;

    std::size_t pos() const noexcept { return pos_; }

private:
    std::uint16_t field_offset(int field) const;
    std::size_t deref(int field) const;

    ByteView buf_;
    std::size_t pos_;
    std::size_t vtable_;
    std::uint16_t vtable_size_;
};

class Vector {
public:
    Vector(ByteView buf, std::size_t pos);

    std::size_t size() const noexcept { return size_; }

    template <typename T>
    T scalar(std::size_t i) const {
        return ByteReader(buf_, ErrorCode::MalformedModel).read_at<T>(data_ + i * sizeof(T));
    }

    Table table(std::size_t i) const;
    std::string_view string(std::size_t i) const;

    /// Raw element bytes, `elem_size` bytes per element.
    ByteView bytes(std::size_t elem_size = 1) const;

private:
    std::size_t element_target(std::size_t i) const;

    ByteView buf_;
    std::size_t data_;
    std::size_t size_;
};

}  // namespace prospector::fb
