#pragma once

#include <stdexcept>
#include <string>

namespace cepred {

// Error categories map 1:1 onto CLI exit codes (2/3/4).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct OrderingError : DataError {
    explicit OrderingError(const std::string& msg) : DataError(msg) {}
};

struct InternalError : std::runtime_error {
    explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cepred
