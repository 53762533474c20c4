#pragma once

#include <stdexcept>
#include <string>

namespace confsig {

// Exit-code mapping: ConfigError -> 1, ServiceError -> 2, IntegrityError -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

struct ServiceError : Error {
    explicit ServiceError(const std::string& msg) : Error(msg) {}
};

struct IntegrityError : Error {
    explicit IntegrityError(const std::string& msg) : Error(msg) {}
};

}  // namespace confsig
