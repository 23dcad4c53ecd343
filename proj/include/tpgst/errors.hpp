#pragma once

#include <stdexcept>
#include <string>

namespace tpgst {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Input values violate an operation's precondition (bad distribution, out-of-range id, ...).
struct ValidationError : std::invalid_argument {
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// API called in a way that cannot be satisfied (missing mode input, non-scalar loss, ...).
// Maps to CLI exit code 2.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// A persisted artifact is inconsistent (hash mismatch, checkpoint shape drift).
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

// Config file failed to load or validate. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tpgst
