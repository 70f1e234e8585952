#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lsa {

enum class ErrorCode {
    NotPositiveDefinite,
    DimensionMismatch,
    EmptyInput,
    NonPositiveTemperature,
    ZeroVector,
    TooFewSamples,
    EmptyIncoming,
    NoOodContext,
    SExceedsC,
    NoLocalEmbeddings,
    EmptyScores,
    LabelOutOfRange,
    IoError,
    BadMagic,
    TruncatedFile,
    ConfigInvalid,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library. what() is "<CodeName>: <detail>".
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail);
    Error(ErrorCode code, const std::string& detail, std::uint64_t byte_offset);

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::uint64_t> byte_offset() const noexcept { return offset_; }

private:
    ErrorCode code_;
    std::optional<std::uint64_t> offset_;
};

} // namespace lsa
