#include "rewardkit/error.hpp"

namespace rewardkit {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MalformedPayload: return "MalformedPayload";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
        case ErrorCode::InvalidBbox: return "InvalidBbox";
        case ErrorCode::DuplicateRegionId: return "DuplicateRegionId";
        case ErrorCode::DanglingBboxRef: return "DanglingBboxRef";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::EmptyValidationSet: return "EmptyValidationSet";
        case ErrorCode::GroupTooSmall: return "GroupTooSmall";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NonPositiveRatio: return "NonPositiveRatio";
        case ErrorCode::WrongBallotCount: return "WrongBallotCount";
        case ErrorCode::DuplicateAnnotator: return "DuplicateAnnotator";
        case ErrorCode::StrictOrderUnavailable: return "StrictOrderUnavailable";
        case ErrorCode::InsufficientPool: return "InsufficientPool";
        case ErrorCode::MissingScore: return "MissingScore";
        case ErrorCode::AllTied: return "AllTied";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::AllZeroMap: return "AllZeroMap";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::AllPairsExcluded: return "AllPairsExcluded";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::JudgeOutputInvalid: return "JudgeOutputInvalid";
        case ErrorCode::MalformedRequest: return "MalformedRequest";
        case ErrorCode::BindFailure: return "BindFailure";
        case ErrorCode::InvalidInput: return "InvalidInput";
    }
    return "Unknown";
}

}  // namespace rewardkit
