// Error types shared across the toolkit.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fstforge {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An input symbol is not part of the relevant alphabet.
struct UnknownSymbolError : Error {
    explicit UnknownSymbolError(const std::string& symbol)
        : Error("unknown symbol: '" + symbol + "'") {}
};

// A dataset or serialized file is malformed; carries the 1-based line number.
struct FormatError : Error {
    FormatError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line(line) {}
    std::size_t line;
};

// Training data maps one input to two different outputs.
struct ConflictError : Error {
    using Error::Error;
};

// Invalid training or extraction configuration.
struct ConfigError : Error {
    using Error::Error;
};

struct InvalidKError : ConfigError {
    using ConfigError::ConfigError;
};

}  // namespace fstforge
