// SPDX-License-Identifier: Apache-2.0
#include "prospector/error.hpp"

namespace prospector {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NotAnArchive: return "NotAnArchive";
        case ErrorCode::CorruptArchive: return "CorruptArchive";
        case ErrorCode::EntryNotFound: return "EntryNotFound";
        case ErrorCode::DecompressFailure: return "DecompressFailure";
        case ErrorCode::UnsupportedFramework: return "UnsupportedFramework";
        case ErrorCode::MalformedModel: return "MalformedModel";
        case ErrorCode::UnsupportedFeature: return "UnsupportedFeature";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::MissingAttr: return "MissingAttr";
        case ErrorCode::NoWeights: return "NoWeights";
        case ErrorCode::NotDex: return "NotDex";
        case ErrorCode::TruncatedDex: return "TruncatedDex";
        case ErrorCode::AdapterTimeout: return "AdapterTimeout";
        case ErrorCode::DeviceRefused: return "DeviceRefused";
        case ErrorCode::SignalLost: return "SignalLost";
        case ErrorCode::EmptyTrace: return "EmptyTrace";
        case ErrorCode::ZeroEnergy: return "ZeroEnergy";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

std::optional<ErrorCode> error_code_from_string(std::string_view text) noexcept {
    for (int i = 0; i <= static_cast<int>(ErrorCode::Config); ++i) {
        const auto code = static_cast<ErrorCode>(i);
        if (to_string(code) == text) return code;
    }
    return std::nullopt;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace prospector
