#pragma once

#include <stdexcept>
#include <string>

namespace resolveq
{

// Invalid input: broken invariants, schema violations, bad arguments.
class ValidationError : public std::runtime_error
{
public:
    explicit ValidationError(const std::string &what) : std::runtime_error(what) {}
};

// A solver could not produce a result: rank deficiency, non-convergence, fit failure.
class SolverError : public std::runtime_error
{
public:
    explicit SolverError(const std::string &what) : std::runtime_error(what) {}
};

// File and format problems.
class IoError : public std::runtime_error
{
public:
    explicit IoError(const std::string &what) : std::runtime_error(what) {}
};

} // namespace resolveq
