#pragma once

#include <stdexcept>
#include <string>

namespace aplt {

enum class ErrorKind {
    invalid_parameter,
    parse_error,
    dimension_mismatch,
    unknown_class,
    missing_labeled_class,
    ratio_too_small,
    empty_batch,
    nonfinite,
    config_error,
    io_error,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::unknown_class: return "unknown-class";
    case ErrorKind::missing_labeled_class: return "missing-labeled-class";
    case ErrorKind::ratio_too_small: return "ratio-too-small";
    case ErrorKind::empty_batch: return "empty-batch";
    case ErrorKind::nonfinite: return "nonfinite";
    case ErrorKind::config_error: return "config-error";
    case ErrorKind::io_error: return "io-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace aplt
