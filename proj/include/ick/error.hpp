#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ick {

enum class ErrorKind {
    shape_mismatch,
    label_out_of_range,
    bad_magic,
    truncated_file,
    count_mismatch,
    record_size,
    version_mismatch,
    insufficient_samples,
    empty_input,
    stale_feature_bank,
    not_on_tape,
    invalid_argument,
    io,
    config,
    consistency,
};

std::string_view to_string(ErrorKind kind);

// Every failure the library reports carries a kind so callers and tests can
// branch on the category without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace ick
