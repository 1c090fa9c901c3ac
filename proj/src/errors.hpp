#ifndef SMAC_ERRORS_HPP
#define SMAC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace smac {

// Error categories map 1:1 onto CLI exit codes / C API status values:
// config 2, data 3, numeric 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension mismatches surface as data errors at the CLI boundary.
struct ShapeError : DataError {
    explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

} // namespace smac

#endif
