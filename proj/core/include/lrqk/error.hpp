#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lrqk {

enum class ErrorCode {
    InvalidArgument,
    NonFinite,
    SolveFailed,
    RankTooLarge,
    IndexOutOfRange,
    Undefined,
    EmptyKeys,
    WindowTooLarge,
    CorruptTrace,
    UnsupportedVersion,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception type thrown by every lrqk module. The code identifies the failure class.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), m_code(code) {}

    ErrorCode code() const noexcept {
        return m_code;
    }

private:
    ErrorCode m_code;
};

}  // namespace lrqk
