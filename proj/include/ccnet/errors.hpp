#pragma once

#include <stdexcept>
#include <string>

namespace ccnet {

// Shape or dimension mismatch between tensors/layers.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A caller broke an operation's contract (non-scalar loss, mismatched
// galleries, empty caption list, ...).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed on-disk data: bad magic, truncated file, unparseable record.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset-level problems: unknown id, duplicate parameter name,
// infeasible synthetic spec.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training aborts (non-finite loss and friends).
struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ccnet
