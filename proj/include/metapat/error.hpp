#pragma once

#include <stdexcept>
#include <string>

namespace metapat {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed cell content (non-numeric, missing value).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Structural file problems: ragged rows, missing header, unreadable file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invariant violation inside the sampler; indicates a bug, not bad input.
class InternalError : public Error {
public:
    using Error::Error;
};

} // namespace metapat
