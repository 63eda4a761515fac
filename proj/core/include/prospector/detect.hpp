// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prospector/bytes.hpp"
#include "prospector/corpus.hpp"
#include "prospector/tables.hpp"

namespace prospector {

enum class Verdict { Valid, Invalid, Unknown };
std::string_view to_string(Verdict verdict) noexcept;

struct ValidationResult {
    ModelCandidate candidate;
    Verdict verdict = Verdict::Unknown;
    std::optional<std::string> rule_fired;  // set iff verdict == Valid
};

/// Signature rules shipped in the builtin format table.
std::vector<SignatureRule> builtin_rules();

bool rule_matches(const SignatureRule& rule, ByteView bytes);

/// Valid iff one of the framework's rules matches (first match is reported);
/// Unknown when the framework has no rules. Pure and thread-safe.
ValidationResult validate(ByteView bytes, std::string_view framework,
                          const FormatTable& table = FormatTable::builtin());

ValidationResult validate_candidate(const ModelCandidate& candidate, ByteView bytes,
                                    const FormatTable& table = FormatTable::builtin());

}  // namespace prospector
