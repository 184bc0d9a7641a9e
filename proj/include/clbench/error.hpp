#ifndef CLBENCH_ERROR_HPP
#define CLBENCH_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace clbench {

// Shape mismatch between tensors/layers (carries both shapes in the message).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Positioned CSV/config parse failure.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column = 0)
        : std::runtime_error(what + " (line " + std::to_string(line) +
                             (column ? ", column " + std::to_string(column) : "") + ")"),
          line_(line),
          column_(column) {}

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

// Invalid experiment configuration (unknown key, bad value, missing section).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values encountered in training or optimization.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace clbench

#endif  // CLBENCH_ERROR_HPP
