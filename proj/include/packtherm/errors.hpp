#pragma once

#include <stdexcept>
#include <string>

namespace packtherm {

/// Single exception type for the whole library; the message names the
/// violated contract (bad magic, constraint violation, non-convergence, ...).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace packtherm
