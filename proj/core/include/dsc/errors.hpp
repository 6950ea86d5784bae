#pragma once

#include <stdexcept>
#include <string>

namespace dsc {

// Base type for all framework errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unreadable input files (missing file, bad header, unparseable row).
class IngestError : public Error {
public:
    explicit IngestError(const std::string& msg) : Error(msg) {}
};

// A value or structure violates a domain invariant (mos bounds, duplicate ids, ...).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Bad experiment configuration; maps to CLI exit code 2.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// An operation precondition does not hold; maps to CLI exit code 3.
class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

// Correlation requested on zero-variance data. Explicit error, never a NaN.
class UndefinedCorrelation : public Error {
public:
    explicit UndefinedCorrelation(const std::string& msg) : Error(msg) {}
};

// Score mapping queried for a dataset the aligner does not know.
class UnknownDatasetError : public Error {
public:
    explicit UnknownDatasetError(const std::string& msg) : Error(msg) {}
};

// Training hit a non-finite loss.
class TrainingDiverged : public Error {
public:
    explicit TrainingDiverged(const std::string& msg) : Error(msg) {}
};

}  // namespace dsc
