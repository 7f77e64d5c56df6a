#pragma once

#include <stdexcept>
#include <string>

namespace featdp {

/// Error with a coarse category used by the CLI to choose its exit status:
/// user/input problems exit 2, internal failures exit 1.
class Error : public std::runtime_error {
 public:
  enum class Kind { kUser, kInternal };

  Error(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline Error user_error(const std::string& message) {
  return Error(Error::Kind::kUser, message);
}

inline Error internal_error(const std::string& message) {
  return Error(Error::Kind::kInternal, message);
}

}  // namespace featdp
