#pragma once

#include <stdexcept>
#include <string>

namespace hfm {

// Caller broke a precondition: shape mismatch, bad extents, misuse of the API.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input data could not be used: malformed file, checksum mismatch, bad config.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value appeared where a finite one is required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace hfm
