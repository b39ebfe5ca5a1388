#ifndef TRAJDET_ERRORS_HPP
#define TRAJDET_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trajdet {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes or dimensions that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A class id or other index outside its valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Training loss blew up.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t epoch)
        : Error(what), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Malformed file contents; carries the byte offset where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Configuration document could not be parsed or contains unknown keys.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
        : Error(line > 0 ? what + " (line " + std::to_string(line) + ", column " +
                               std::to_string(column) + ")"
                         : what),
          line_(line),
          column_(column) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// A file the run depends on is absent or unreadable.
class MissingFileError : public Error {
public:
    using Error::Error;
};

}  // namespace trajdet

#endif  // TRAJDET_ERRORS_HPP
