// SPDX-License-Identifier: Apache-2.0
#include "prospector/protowire.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <set>
#include <variant>

#include <fmt/format.h>

namespace prospector {

std::uint64_t read_varint(ByteReader& r) { return r.read_uleb128(); }

bool WireReader::next(WireField& field) {
    if (reader_.at_end()) return false;
    const std::uint64_t tag = read_varint(reader_);
    const auto type = static_cast<std::uint32_t>(tag & 0x7);
    const auto number = tag >> 3;
    if (number == 0 || number > 0x1fffffff) {
        throw Error(code_, fmt::format("invalid field number {}", number));
    }
    field.number = static_cast<std::uint32_t>(number);
    field.varint = 0;
    field.payload = {};
    switch (type) {
        case 0:
            field.type = WireType::Varint;
            field.varint = read_varint(reader_);
            break;
        case 1:
            field.type = WireType::Fixed64;
            field.payload = reader_.read_bytes(8);
            break;
        case 2: {
            field.type = WireType::Len;
            const auto len = read_varint(reader_);
            if (len > reader_.remaining()) {
                throw Error(code_, fmt::format("field {} length {} exceeds remaining {} bytes",
                                               number, len, reader_.remaining()));
            }
            field.payload = reader_.read_bytes(static_cast<std::size_t>(len));
            break;
        }
        case 5:
            field.type = WireType::Fixed32;
            field.payload = reader_.read_bytes(4);
            break;
        default:
            throw Error(code_, fmt::format("field {} uses unsupported wire type {}", number, type));
    }
    return true;
}

namespace {

bool parses_as_message(ByteView data) {
    try {
        WireReader reader(data, ErrorCode::MalformedModel);
        WireField f;
        while (reader.next(f)) {
        }
        return true;
    } catch (const Error&) {
        return false;
    }
}

}  // namespace

bool protobuf_probe(ByteView data, const StructuredProbe& probe) {
    std::set<std::uint32_t> seen;
    std::size_t count = 0;
    try {
        WireReader reader(data, ErrorCode::MalformedModel);
        WireField f;
        while (reader.next(f)) {
            ++count;
            auto it = probe.fields.find(f.number);
            if (it == probe.fields.end()) {
                if (!probe.allow_unknown) return false;
            } else if (it->second != f.type) {
                return false;
            }
            const bool required =
                std::find(probe.require.begin(), probe.require.end(), f.number) != probe.require.end() ||
                std::find(probe.require_any.begin(), probe.require_any.end(), f.number) !=
                    probe.require_any.end();
            if (required && f.type == WireType::Len && !parses_as_message(f.payload)) {
                return false;
            }
            seen.insert(f.number);
        }
    } catch (const Error&) {
        return false;
    }
    if (count == 0) return false;
    for (auto n : probe.require) {
        if (!seen.contains(n)) return false;
    }
    if (!probe.require_any.empty() &&
        std::none_of(probe.require_any.begin(), probe.require_any.end(),
                     [&](auto n) { return seen.contains(n); })) {
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Text format

struct ProtoNode::TextMessage {
    struct Field {
        std::string name;
        // scalar token (unquoted string content or literal) or child message
        std::variant<std::string, std::shared_ptr<TextMessage>> value;
        bool quoted = false;
    };
    std::vector<Field> fields;
};

namespace {

class TextParser {
public:
    explicit TextParser(std::string_view text) : text_(text) {}

    std::shared_ptr<ProtoNode::TextMessage> parse_root() {
        auto msg = std::make_shared<ProtoNode::TextMessage>();
        parse_fields(*msg, '\0');
        return msg;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::MalformedModel, fmt::format("prototxt line {}: {}", line_, what));
    }

    void skip_space() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == '\n') {
                ++line_;
                ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    bool peek(char c) {
        skip_space();
        return pos_ < text_.size() && text_[pos_] == c;
    }

    bool consume(char c) {
        if (!peek(c)) return false;
        ++pos_;
        return true;
    }

    std::string identifier() {
        skip_space();
        const auto start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '/' ||
                c == '-' || c == '+') {
                ++pos_;
            } else {
                break;
            }
        }
        if (start == pos_) fail(fmt::format("expected identifier near '{}'", text_.substr(pos_, 12)));
        return std::string(text_.substr(start, pos_ - start));
    }

    std::string quoted() {
        const char quote = text_[pos_++];
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != quote) {
            char c = text_[pos_++];
            if (c == '\\' && pos_ < text_.size()) {
                const char e = text_[pos_++];
                switch (e) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case 'r': c = '\r'; break;
                    default: c = e; break;
                }
            } else if (c == '\n') {
                ++line_;
            }
            out.push_back(c);
        }
        if (pos_ >= text_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    void parse_value(ProtoNode::TextMessage& msg, const std::string& name) {
        skip_space();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        const char c = text_[pos_];
        if (c == '{' || c == '<') {
            ++pos_;
            auto child = std::make_shared<ProtoNode::TextMessage>();
            parse_fields(*child, c == '{' ? '}' : '>');
            msg.fields.push_back({name, std::move(child), false});
        } else if (c == '"' || c == '\'') {
            std::string s = quoted();
            // adjacent string literals concatenate
            while (peek('"') || peek('\'')) s += quoted();
            msg.fields.push_back({name, std::move(s), true});
        } else {
            msg.fields.push_back({name, identifier(), false});
        }
    }

    void parse_fields(ProtoNode::TextMessage& msg, char close) {
        while (true) {
            skip_space();
            if (pos_ >= text_.size()) {
                if (close != '\0') fail("unexpected end of input inside message");
                return;
            }
            if (close != '\0' && text_[pos_] == close) {
                ++pos_;
                return;
            }
            const std::string name = identifier();
            const bool colon = consume(':');
            if (consume('[')) {
                if (!consume(']')) {
                    do {
                        parse_value(msg, name);
                    } while (consume(','));
                    if (!consume(']')) fail("expected ']'");
                }
            } else {
                if (!colon && !peek('{') && !peek('<')) fail(fmt::format("expected ':' after '{}'", name));
                parse_value(msg, name);
            }
            if (!consume(';')) consume(',');
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

std::int64_t parse_int_token(const std::string& token, std::string_view field) {
    std::int64_t value = 0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    int base = 10;
    bool neg = false;
    if (first != last && *first == '-') {
        neg = true;
        ++first;
    } else if (first != last && *first == '+') {
        ++first;
    }
    if (last - first > 2 && first[0] == '0' && (first[1] == 'x' || first[1] == 'X')) {
        base = 16;
        first += 2;
    }
    std::uint64_t magnitude = 0;
    auto [ptr, ec] = std::from_chars(first, last, magnitude, base);
    if (ec != std::errc{} || ptr != last) {
        if (token == "true") return 1;
        if (token == "false") return 0;
        throw Error(ErrorCode::MalformedModel, fmt::format("field '{}': '{}' is not an integer", field, token));
    }
    value = neg ? -static_cast<std::int64_t>(magnitude) : static_cast<std::int64_t>(magnitude);
    return value;
}

double parse_real_token(const std::string& token, std::string_view field) {
    std::string t = token;
    if (!t.empty() && (t.back() == 'f' || t.back() == 'F') && t.find_first_of("0123456789") != std::string::npos &&
        t != "inf" && t != "-inf") {
        t.pop_back();
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::MalformedModel, fmt::format("field '{}': '{}' is not a number", field, token));
    }
}

template <typename Fn>
void for_each_binary(ByteView data, std::uint32_t number, Fn&& fn) {
    WireReader reader(data, ErrorCode::MalformedModel);
    WireField f;
    while (reader.next(f)) {
        if (f.number == number) fn(f);
    }
}

}  // namespace

ProtoNode ProtoNode::parse_text(std::string_view text) {
    ProtoNode node;
    node.root_ = TextParser(text).parse_root();
    node.text_ = node.root_.get();
    return node;
}

ProtoNode ProtoNode::parse_binary(ByteView data) {
    // Validate the top level eagerly so malformed input fails at the boundary.
    for_each_binary(data, 0, [](const WireField&) {});
    ProtoNode node;
    node.binary_ = data;
    return node;
}

bool ProtoNode::has(FieldKey key) const {
    if (text_) {
        return std::any_of(text_->fields.begin(), text_->fields.end(),
                           [&](const auto& f) { return f.name == key.name; });
    }
    bool found = false;
    for_each_binary(binary_, key.number, [&](const WireField&) { found = true; });
    return found;
}

std::vector<ProtoNode> ProtoNode::messages(FieldKey key) const {
    std::vector<ProtoNode> out;
    if (text_) {
        for (const auto& f : text_->fields) {
            if (f.name != key.name) continue;
            const auto* child = std::get_if<std::shared_ptr<TextMessage>>(&f.value);
            if (!child) {
                throw Error(ErrorCode::MalformedModel, fmt::format("field '{}' is not a message", key.name));
            }
            ProtoNode node;
            node.root_ = root_;
            node.text_ = child->get();
            out.push_back(std::move(node));
        }
        return out;
    }
    for_each_binary(binary_, key.number, [&](const WireField& f) {
        if (f.type != WireType::Len) {
            throw Error(ErrorCode::MalformedModel, fmt::format("field {} is not a message", key.number));
        }
        out.push_back(parse_binary(f.payload));
    });
    return out;
}

std::vector<std::string> ProtoNode::strings(FieldKey key) const {
    std::vector<std::string> out;
    if (text_) {
        for (const auto& f : text_->fields) {
            if (f.name != key.name) continue;
            const auto* s = std::get_if<std::string>(&f.value);
            if (!s) throw Error(ErrorCode::MalformedModel, fmt::format("field '{}' is not a scalar", key.name));
            out.push_back(*s);
        }
        return out;
    }
    for_each_binary(binary_, key.number, [&](const WireField& f) {
        if (f.type != WireType::Len) {
            throw Error(ErrorCode::MalformedModel, fmt::format("field {} is not a string", key.number));
        }
        out.emplace_back(as_chars(f.payload));
    });
    return out;
}

std::vector<std::int64_t> ProtoNode::ints(FieldKey key) const {
    std::vector<std::int64_t> out;
    if (text_) {
        for (const auto& s : strings(key)) out.push_back(parse_int_token(s, key.name));
        return out;
    }
    for_each_binary(binary_, key.number, [&](const WireField& f) {
        if (f.type == WireType::Varint) {
            out.push_back(static_cast<std::int64_t>(f.varint));
        } else if (f.type == WireType::Len) {
            ByteReader packed(f.payload, ErrorCode::MalformedModel);
            while (!packed.at_end()) out.push_back(static_cast<std::int64_t>(read_varint(packed)));
        } else {
            throw Error(ErrorCode::MalformedModel, fmt::format("field {} is not an integer", key.number));
        }
    });
    return out;
}

std::vector<double> ProtoNode::reals(FieldKey key) const {
    std::vector<double> out;
    if (text_) {
        for (const auto& s : strings(key)) out.push_back(parse_real_token(s, key.name));
        return out;
    }
    for_each_binary(binary_, key.number, [&](const WireField& f) {
        if (f.type == WireType::Fixed32) {
            out.push_back(load_le<float>(f.payload.data()));
        } else if (f.type == WireType::Fixed64) {
            out.push_back(load_le<double>(f.payload.data()));
        } else if (f.type == WireType::Len) {
            if (f.payload.size() % 4 != 0) {
                throw Error(ErrorCode::MalformedModel, fmt::format("packed field {} is not f32-aligned", key.number));
            }
            for (std::size_t i = 0; i < f.payload.size(); i += 4) out.push_back(load_le<float>(&f.payload[i]));
        } else {
            throw Error(ErrorCode::MalformedModel, fmt::format("field {} is not a float", key.number));
        }
    });
    return out;
}

std::optional<ProtoNode> ProtoNode::message(FieldKey key) const {
    auto all = messages(key);
    if (all.empty()) return std::nullopt;
    return std::move(all.back());
}

std::optional<std::string> ProtoNode::string(FieldKey key) const {
    auto all = strings(key);
    if (all.empty()) return std::nullopt;
    return std::move(all.back());
}

std::optional<std::int64_t> ProtoNode::int_value(FieldKey key) const {
    auto all = ints(key);
    if (all.empty()) return std::nullopt;
    return all.back();
}

std::optional<double> ProtoNode::real(FieldKey key) const {
    auto all = reals(key);
    if (all.empty()) return std::nullopt;
    return all.back();
}

Bytes ProtoNode::float_bytes(FieldKey key) const {
    Bytes out;
    if (text_) {
        for (double v : reals(key)) {
            const auto f = static_cast<float>(v);
            std::uint8_t raw[4];
            std::memcpy(raw, &f, 4);
            out.insert(out.end(), raw, raw + 4);
        }
        return out;
    }
    for_each_binary(binary_, key.number, [&](const WireField& f) {
        if (f.type == WireType::Fixed32 || (f.type == WireType::Len && f.payload.size() % 4 == 0)) {
            out.insert(out.end(), f.payload.begin(), f.payload.end());
        } else {
            throw Error(ErrorCode::MalformedModel, fmt::format("field {} is not a float array", key.number));
        }
    });
    return out;
}

}  // namespace prospector
