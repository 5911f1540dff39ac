#pragma once

#include <stdexcept>
#include <string>

namespace prl {

// Bad caller input: out-of-range ids, malformed files, violated preconditions.
class input_error : public std::runtime_error {
public:
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where the contract requires finite ones (NaN gradients etc).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures: missing files, short reads, failed writes.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace prl
