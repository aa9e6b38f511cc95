#pragma once

#include <stdexcept>
#include <string>

namespace moc2her {

// Thrown when an operation is called outside its stated preconditions.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace moc2her
