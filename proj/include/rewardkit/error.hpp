#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace rewardkit {

// Every failure the library reports maps onto one of these codes. The names
// are part of the wire contract (service error bodies, CLI validate counts),
// so never rename an existing entry.
enum class ErrorCode {
    // judge-io
    MalformedPayload,
    MissingField,
    ScoreOutOfRange,
    InvalidBbox,
    DuplicateRegionId,
    DanglingBboxRef,
    // reward-agg
    DomainError,
    ConfigInvalid,
    EmptyValidationSet,
    // grpo-signal
    GroupTooSmall,
    LengthMismatch,
    NonPositiveRatio,
    // bench-eval
    WrongBallotCount,
    DuplicateAnnotator,
    StrictOrderUnavailable,
    InsufficientPool,
    MissingScore,
    AllTied,
    // attn-diag
    EmptyInput,
    AllZeroMap,
    ZeroVariance,
    TooFewSamples,
    AllPairsExcluded,
    // reward-service
    BackendUnavailable,
    JudgeOutputInvalid,
    MalformedRequest,
    BindFailure,
    // file and wire formats
    InvalidInput,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Raised when a judge transcript cannot be turned into scores. The raw text
// travels with the error so callers can log or re-inspect it.
class JudgeOutputError : public Error {
public:
    JudgeOutputError(ErrorCode cause, std::string raw, const std::string& message)
        : Error(ErrorCode::JudgeOutputInvalid, message), cause_(cause), raw_(std::move(raw)) {}

    ErrorCode cause() const noexcept { return cause_; }
    const std::string& raw() const noexcept { return raw_; }

private:
    ErrorCode cause_;
    std::string raw_;
};

}  // namespace rewardkit
