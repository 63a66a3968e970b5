#pragma once

#include <stdexcept>
#include <string>

namespace ridehail {

// Thrown when a scenario/config fails structural validation. CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an iterative solve fails to reach its tolerance. CLI maps this to exit code 3.
struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on file/serialization problems. CLI maps this to exit code 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ridehail
