#pragma once

#include <stdexcept>
#include <string>

namespace realm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or axis disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input outside an operation's mathematical domain (log of non-positive, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Caller broke a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Token id or index out of range.
class IndexError : public Error {
public:
    using Error::Error;
};

// Trajectory does not cover a requested horizon.
class CoverageError : public Error {
public:
    using Error::Error;
};

// Malformed message from an external transport.
class ProtocolError : public Error {
public:
    using Error::Error;
};

} // namespace realm
