#pragma once

#include <stdexcept>
#include <string>

namespace ttarl {

// Base class for all library errors. Subclasses map to CLI exit codes:
// validation/integrity errors exit 1, training failures exit 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension disagreement between tensor arguments.
class DimError : public Error {
public:
    explicit DimError(const std::string& msg) : Error("dimension error: " + msg) {}
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

// An id (node, parameter name) is not registered.
class LookupError : public Error {
public:
    explicit LookupError(const std::string& msg) : Error("lookup error: " + msg) {}
};

// A caption has no corruptible slot for the requested corruption kind.
class CorruptionImpossible : public Error {
public:
    explicit CorruptionImpossible(const std::string& msg)
        : Error("corruption impossible: " + msg) {}
};

// File-level problems: bad magic, version, truncation, checksum, schema.
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& msg) : Error("integrity error: " + msg) {}
};

// Config file violates the schema; message names the offending field.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// Training did not reach its required target.
class TrainingFailure : public Error {
public:
    TrainingFailure(const std::string& msg, double achieved)
        : Error("training failure: " + msg), achieved_metric(achieved) {}
    double achieved_metric;
};

} // namespace ttarl
