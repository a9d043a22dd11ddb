#pragma once

#include <stdexcept>
#include <string>

namespace dbigan {

// Bad shapes, inconsistent network configs, invalid options.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values escaping a forward pass or a loss term.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing or corrupt files, unwritable outputs.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dbigan
