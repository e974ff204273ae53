#pragma once

#include <stdexcept>
#include <string>

namespace gdt {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents (bad magic, bad header token, truncation).
class FormatError : public Error { public: using Error::Error; };

// Invalid boxes or regions (box outside image, degenerate crop).
class GeometryError : public Error { public: using Error::Error; };

// Inconsistent or out-of-range configuration values.
class ConfigError : public Error { public: using Error::Error; };

// Rejection sampling could not satisfy its constraints.
class SamplingError : public Error { public: using Error::Error; };

// Shape or length mismatch between inputs, or a stale forward cache.
class DimensionError : public Error { public: using Error::Error; };

// Unreadable or unwritable paths.
class IoError : public Error { public: using Error::Error; };

// Non-finite values where finite ones are required.
class NumericError : public Error { public: using Error::Error; };

} // namespace gdt
