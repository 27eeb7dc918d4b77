#pragma once

#include <stdexcept>
#include <string>

namespace pcnst {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents (PLY, PPM, checkpoint, manifest).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or unsupported configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered during a numeric routine.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace pcnst
