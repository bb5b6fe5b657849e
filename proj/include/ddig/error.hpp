#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ddig {

enum class ErrorKind {
    // usage / configuration
    InvalidConfig,
    ConfigMismatch,
    IndivisibleGrid,
    UnsupportedMaskFormat,
    // data format
    MagicMismatch,
    VersionUnsupported,
    TruncatedPayload,
    NonFiniteValue,
    ManifestMismatch,
    MalformedManifest,
    DuplicateItem,
    MalformedMask,
    MalformedReport,
    DimensionMismatch,
    RegionMismatch,
    // computation
    TooFewPoints,
    ZeroDenominator,
    SingleRegion,
    InvalidArgument,
    IoFailure,
};

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    Success = 0,
    Usage = 2,
    DataFormat = 3,
    Computation = 4,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::IndivisibleGrid: return "IndivisibleGrid";
    case ErrorKind::UnsupportedMaskFormat: return "UnsupportedMaskFormat";
    case ErrorKind::MagicMismatch: return "MagicMismatch";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::MalformedManifest: return "MalformedManifest";
    case ErrorKind::DuplicateItem: return "DuplicateItem";
    case ErrorKind::MalformedMask: return "MalformedMask";
    case ErrorKind::MalformedReport: return "MalformedReport";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::RegionMismatch: return "RegionMismatch";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::ZeroDenominator: return "ZeroDenominator";
    case ErrorKind::SingleRegion: return "SingleRegion";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

constexpr ExitCode default_exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::ConfigMismatch:
    case ErrorKind::IndivisibleGrid:
    case ErrorKind::UnsupportedMaskFormat:
        return ExitCode::Usage;
    case ErrorKind::MagicMismatch:
    case ErrorKind::VersionUnsupported:
    case ErrorKind::TruncatedPayload:
    case ErrorKind::NonFiniteValue:
    case ErrorKind::ManifestMismatch:
    case ErrorKind::MalformedManifest:
    case ErrorKind::DuplicateItem:
    case ErrorKind::MalformedMask:
    case ErrorKind::MalformedReport:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::RegionMismatch:
        return ExitCode::DataFormat;
    case ErrorKind::TooFewPoints:
    case ErrorKind::ZeroDenominator:
    case ErrorKind::SingleRegion:
    case ErrorKind::InvalidArgument:
    case ErrorKind::IoFailure:
        return ExitCode::Computation;
    }
    return ExitCode::Computation;
}

/// The single exception type thrown by the library. `kind()` is stable and
/// machine-readable; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind), exit_code_(default_exit_code(kind)) {}

    Error(ErrorKind kind, const std::string& message, ExitCode exit_code)
        : std::runtime_error(message), kind_(kind), exit_code_(exit_code) {}

    static Error non_finite(std::size_t row) {
        Error e(ErrorKind::NonFiniteValue, "non-finite value at row " + std::to_string(row));
        e.row_ = row;
        return e;
    }

    ErrorKind kind() const noexcept { return kind_; }
    ExitCode exit_code() const noexcept { return exit_code_; }
    /// Row index for NonFiniteValue.
    std::optional<std::size_t> row() const noexcept { return row_; }

  private:
    ErrorKind kind_;
    ExitCode exit_code_;
    std::optional<std::size_t> row_;
};

} // namespace ddig
