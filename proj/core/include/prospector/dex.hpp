// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "prospector/bytes.hpp"

namespace prospector {

/// Entries of the dex string_ids table in table order. MUTF-8 is converted
/// to UTF-8 (surrogate pairs joined, lone surrogates kept as three-byte
/// sequences); entries that fail to decode are returned as their raw bytes.
/// Throws NotDex on a bad magic and TruncatedDex when an offset points past
/// the end of the file.
std::vector<std::string> extract_dex_strings(ByteView dex);

/// True when `data` starts with "dex\n" + three digits + NUL.
bool has_dex_magic(ByteView data) noexcept;

}  // namespace prospector
