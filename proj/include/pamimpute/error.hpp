#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pamimpute {

/// Broad failure classes. Each maps to one CLI exit code.
enum class ErrorKind { usage, data, numeric, infeasible };

int exit_code(ErrorKind kind) noexcept;
std::string_view kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// data errors
struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error(ErrorKind::data, m) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error(ErrorKind::data, m) {}
};
struct DegenerateColumnError : Error {
    DegenerateColumnError(long column, const std::string& m)
        : Error(ErrorKind::data, m), column(column) {}
    long column;
};
struct PatternError : Error {
    explicit PatternError(const std::string& m) : Error(ErrorKind::data, m) {}
};
struct DimensionError : Error {
    explicit DimensionError(const std::string& m) : Error(ErrorKind::data, m) {}
};

// numeric errors
struct ConditioningError : Error {
    ConditioningError(double rcond, const std::string& m)
        : Error(ErrorKind::numeric, m), rcond(rcond) {}
    double rcond;
};
struct DomainError : Error {
    explicit DomainError(const std::string& m) : Error(ErrorKind::numeric, m) {}
};

// infeasible configurations
struct MetricUndefinedError : Error {
    explicit MetricUndefinedError(const std::string& m) : Error(ErrorKind::infeasible, m) {}
};
struct SpecError : Error {
    explicit SpecError(const std::string& m) : Error(ErrorKind::infeasible, m) {}
};
struct DeletionInfeasibleError : Error {
    explicit DeletionInfeasibleError(const std::string& m) : Error(ErrorKind::infeasible, m) {}
};
struct BenchmarkError : Error {
    explicit BenchmarkError(const std::string& m) : Error(ErrorKind::infeasible, m) {}
};

}  // namespace pamimpute
