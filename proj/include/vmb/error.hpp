#pragma once

#include <stdexcept>
#include <string>

namespace vmb {

// Error taxonomy maps onto CLI exit codes: config 2, data 3, numerical 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes or parameter shapes do not line up.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf produced on finite input, non-positive step sizes, NaN loss aborts.
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// Manifest/image/checkpoint content problems.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Bad configuration files or command arguments.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

} // namespace vmb
