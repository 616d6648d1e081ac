#pragma once

#include <stdexcept>
#include <string>

namespace groundbank {

// Error taxonomy. The CLI maps each type to a distinct exit code.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct capacity_error : std::runtime_error {
    explicit capacity_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct integrity_error : std::runtime_error {
    explicit integrity_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A cached artifact no longer matches the weights/config it was built from.
struct stale_bank_error : std::runtime_error {
    explicit stale_bank_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct metric_error : std::runtime_error {
    explicit metric_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct client_error : std::runtime_error {
    explicit client_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace groundbank
