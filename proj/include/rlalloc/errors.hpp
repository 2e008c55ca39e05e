#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rlalloc {

// Error taxonomy shared by every module. Callers that only care about
// "something went wrong" can catch std::exception; the CLI maps these to
// field-level messages and non-zero exit codes.

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class RangeError : public std::out_of_range {
    using std::out_of_range::out_of_range;
};

class ArgumentError : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

class GraphError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ContractError : public std::logic_error {
    using std::logic_error::logic_error;
};

class InfeasibleError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Cost exceeded the gross return of a period; the portfolio is wiped out.
class RuinError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rlalloc
