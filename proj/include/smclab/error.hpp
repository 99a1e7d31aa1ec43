#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smclab {

/// Failure categories. The CLI maps these onto exit codes.
enum class ErrorKind {
    dimension,
    domain,
    rank,
    capability,
    precondition,
    accuracy,
    not_p_matrix,
    iteration_limit,
    timestep,
    config,
    alignment,
    fit,
};

inline constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::domain: return "domain";
    case ErrorKind::rank: return "rank";
    case ErrorKind::capability: return "capability";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::accuracy: return "accuracy";
    case ErrorKind::not_p_matrix: return "not-P-matrix";
    case ErrorKind::iteration_limit: return "iteration-limit";
    case ErrorKind::timestep: return "timestep";
    case ErrorKind::config: return "config";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::fit: return "fit";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the "<kind> error: " prefix that what() carries.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

/// Raised by the simulator when a controller or timestep error occurs mid-run.
class StepError : public Error {
public:
    StepError(ErrorKind kind, std::size_t step, const std::string& message)
        : Error(kind, "step " + std::to_string(step) + ": " + message), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

} // namespace smclab
