#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace progtex {

enum class ErrorCode {
    ParseError,
    MissingUVs,
    NonTriangulated,
    DegenerateMesh,
    ZeroCoverage,
    InvalidArgument,
    InvalidRange,
    ShapeMismatch,
    StepOutOfRange,
    IndivisibleFactor,
    ResolutionMismatch,
    PredictorFailure,
    Timeout,
    ProtocolError,
    BackendError,
    ContractViolation,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingUVs: return "MissingUVs";
    case ErrorCode::NonTriangulated: return "NonTriangulated";
    case ErrorCode::DegenerateMesh: return "DegenerateMesh";
    case ErrorCode::ZeroCoverage: return "ZeroCoverage";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::IndivisibleFactor: return "IndivisibleFactor";
    case ErrorCode::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorCode::PredictorFailure: return "PredictorFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::ContractViolation: return "ContractViolation";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Exception carrying a machine-readable error kind alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace progtex
