#pragma once

#include <stdexcept>
#include <string>

namespace edtalk {

struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& m) : std::invalid_argument(m) {}
};

struct RangeError : std::out_of_range {
    explicit RangeError(const std::string& m) : std::out_of_range(m) {}
};

struct TypeError : std::invalid_argument {
    explicit TypeError(const std::string& m) : std::invalid_argument(m) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace edtalk
