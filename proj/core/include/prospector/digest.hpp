// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "prospector/bytes.hpp"

namespace prospector {

/// Name recorded next to every digest in exported records.
inline constexpr std::string_view k_digest_algorithm = "sha256";

/// Incremental SHA-256.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(Sha256&&) noexcept;
    Sha256& operator=(Sha256&&) noexcept;
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(ByteView data);
    Sha256& update(std::string_view text) { return update(as_bytes(text)); }

    /// Lower-case hex of the 32-byte digest. The hasher is spent afterwards.
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(ByteView data);
std::string sha256_hex(std::string_view text);

std::string base64_encode(ByteView data);
/// Throws InvalidArgument on malformed input.
Bytes base64_decode(std::string_view text);

}  // namespace prospector
