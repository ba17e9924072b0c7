#pragma once

#include <stdexcept>
#include <string>

namespace purcellkit {

// Bad input: missing keys, unphysical values, malformed documents. CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Solver trouble: tolerance not reachable, empty fit window, no bracket. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace purcellkit
