#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace flowfuse {

// Raised when a caller breaks a documented precondition (shape mismatch,
// out-of-range argument, malformed file, ...).
struct ContractViolation : std::runtime_error {
    explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when an optimization loop produces non-finite losses.
struct TrainingDivergence : std::runtime_error {
    explicit TrainingDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_contract(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

std::string shape_str(const std::vector<int>& shape);

}  // namespace flowfuse
