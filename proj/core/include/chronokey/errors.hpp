#pragma once

#include <stdexcept>
#include <string>

namespace chronokey {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Value outside the manifest's index space or a function's stated domain.
struct BoundsError : Error {
  using Error::Error;
};

// Malformed or inconsistent input file.
struct FormatError : Error {
  using Error::Error;
};

}  // namespace chronokey
