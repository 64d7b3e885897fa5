#pragma once

#include <stdexcept>
#include <string>

namespace auxcl {

// Base class for every error raised by the library. The C API maps the
// subclasses onto status codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or geometry.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Label or index out of range.
class IndexError : public Error {
public:
    using Error::Error;
};

// Operation invoked in a state that does not allow it (missing gradient,
// unmapped class, exhausted aux heads, ...).
class StateError : public Error {
public:
    using Error::Error;
};

// Invalid configuration: bad parameters, too few classes, class overlap.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input file.
class FormatError : public Error {
public:
    using Error::Error;
};

// API misuse, e.g. an all-false head mask.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace auxcl
