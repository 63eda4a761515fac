// SPDX-License-Identifier: Apache-2.0
#include "flatbuffer.hpp"

#include <fmt/format.h>

namespace prospector::fb {

namespace {

[[noreturn]] void malformed(const std::string& msg) { throw Error(ErrorCode::MalformedModel, msg); }

ByteReader reader(ByteView buf) { return ByteReader(buf, ErrorCode::MalformedModel); }

std::string_view string_at(ByteView buf, std::size_t pos) {
    const auto len = reader(buf).read_at<std::uint32_t>(pos);
    auto body = reader(buf).view_at(pos + 4, static_cast<std::size_t>(len) + 1);
    if (body[len] != 0) malformed(fmt::format("string at {} is not NUL-terminated", pos));
    return as_chars(body.first(len));
}

}  // namespace

Table::Table(ByteView buf, std::size_t pos) : buf_(buf), pos_(pos) {
    const auto soffset = reader(buf_).read_at<std::int32_t>(pos_);
    const auto vt = static_cast<std::int64_t>(pos_) - soffset;
    if (vt < 0 || static_cast<std::size_t>(vt) + 4 > buf_.size()) {
        malformed(fmt::format("table at {} has vtable outside the buffer", pos_));
    }
    vtable_ = static_cast<std::size_t>(vt);
    vtable_size_ = reader(buf_).read_at<std::uint16_t>(vtable_);
    if (vtable_size_ < 4 || vtable_size_ % 2 != 0) malformed(fmt::format("vtable at {} has size {}", vtable_, vtable_size_));
    reader(buf_).view_at(vtable_, vtable_size_);
}

Table Table::root(ByteView buf) {
    const auto off = reader(buf).read_at<std::uint32_t>(0);
    return Table(buf, off);
}

std::uint16_t Table::field_offset(int field) const {
    const std::size_t slot = 4 + 2 * static_cast<std::size_t>(field);
    if (slot + 2 > vtable_size_) return 0;
    return reader(buf_).read_at<std::uint16_t>(vtable_ + slot);
}

std::size_t Table::deref(int field) const {
    const std::size_t at = pos_ + field_offset(field);
    return at + reader(buf_).read_at<std::uint32_t>(at);
}

std::optional<Table> Table::table(int field) const {
    if (!has(field)) return std::nullopt;
    return Table(buf_, deref(field));
}

std::optional<Vector> Table::vector(int field) const {
    if (!has(field)) return std::nullopt;
    return Vector(buf_, deref(field));
}

std::optional<std::string_view> Table::string(int field) const {
    if (!has(field)) return std::nullopt;
    return string_at(buf_, deref(field));
}

Vector::Vector(ByteView buf, std::size_t pos) : buf_(buf), data_(pos + 4) {
    size_ = reader(buf_).read_at<std::uint32_t>(pos);
    if (data_ > buf_.size() || size_ > buf_.size() - data_) {
        malformed(fmt::format("vector at {} with {} elements overruns the buffer", pos, size_));
    }
}

std::size_t Vector::element_target(std::size_t i) const {
    if (i >= size_) malformed(fmt::format("vector index {} out of range {}", i, size_));
    const std::size_t at = data_ + 4 * i;
    return at + reader(buf_).read_at<std::uint32_t>(at);
}

Table Vector::table(std::size_t i) const { return Table(buf_, element_target(i)); }

std::string_view Vector::string(std::size_t i) const { return string_at(buf_, element_target(i)); }

ByteView Vector::bytes(std::size_t elem_size) const {
    return reader(buf_).view_at(data_, size_ * elem_size);
}

}  // namespace prospector::fb
