// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace prospector {

enum class ErrorCode {
    // corpus
    NotAnArchive,
    CorruptArchive,
    EntryNotFound,
    DecompressFailure,
    // ir
    UnsupportedFramework,
    MalformedModel,
    UnsupportedFeature,
    SchemaViolation,
    CycleDetected,
    // metrics
    ShapeMismatch,
    MissingAttr,
    // fingerprint / optscan
    NoWeights,
    NotDex,
    TruncatedDex,
    // bench
    AdapterTimeout,
    DeviceRefused,
    SignalLost,
    EmptyTrace,
    ZeroEnergy,
    // report
    EmptyInput,
    UnsupportedFormat,
    // general
    InvalidArgument,
    Io,
    Config,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> error_code_from_string(std::string_view text) noexcept;

/// Exception carrying a machine-checkable error code. Every failure the
/// library reports to callers is one of these.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace prospector
