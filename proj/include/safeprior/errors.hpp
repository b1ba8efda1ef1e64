#ifndef SAFEPRIOR_ERRORS_HPP
#define SAFEPRIOR_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace safeprior {

/// Invalid configuration or experiment setup (maps with no start cells,
/// too few source tasks, goals on obstacles, ...). The CLI maps this to exit 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed map or table text. Line and column are 1-based.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : std::runtime_error(what + " (line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ")"),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// A closed-form quantity evaluated outside the domain where it is defined.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace safeprior

#endif
