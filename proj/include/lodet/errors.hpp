#pragma once

#include <stdexcept>
#include <string>

namespace lodet {

// Rejected or inconsistent input data (bad spec fields, malformed files,
// shape mismatches). Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Phantom generation could not satisfy the requested constraints. The message
// names the spec field at fault.
class GenerationError : public ValidationError {
public:
    explicit GenerationError(const std::string& msg) : ValidationError(msg) {}
};

// Broken internal invariant (a bug, not a data problem). Maps to CLI exit code 3.
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace lodet
