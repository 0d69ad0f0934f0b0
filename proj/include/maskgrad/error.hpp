#pragma once

#include <stdexcept>
#include <string>

namespace maskgrad {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 1 (usage/configuration), DataError -> 2 (file/format),
//   NumericError -> 3 (non-finite values, numeric failure).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail_config(const std::string& msg) { throw ConfigError(msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw DataError(msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw NumericError(msg); }

}  // namespace maskgrad
