#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qexodus {

enum class ErrorKind {
    InvalidArgument,
    ScheduleDegenerate,
    StartingInBoundary,
    HorizonTooDeep,
    ConditioningOnNull,
    CertificateRequired,
    Window,
    PowerIteration,
    Kind,
    AssumptionViolation,
    Shape,
    Domain,
    DriftTooStrong,
    Model,
    TooFewSurvivors,
    Parse,
    Schema,
    UnknownSeries,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this type; `kind()` lets callers
// branch on the failure class without parsing messages.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace qexodus
