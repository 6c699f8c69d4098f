#ifndef RSQAIR_ERRORS_HPP
#define RSQAIR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rsqair {

struct Error : std::runtime_error {
    explicit Error(const std::string& m) : std::runtime_error(m) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error("shape: " + m) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config: " + m) {}
};

struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io: " + m) {}
};

// attention window with non-positive or non-invertible scale
struct InvalidWindowError : Error {
    explicit InvalidWindowError(const std::string& m) : Error("invalid window: " + m) {}
};

// non-finite value in an objective; message carries the component breakdown
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric: " + m) {}
};

}  // namespace rsqair

#endif
