#pragma once

#include <stdexcept>
#include <string>

namespace irrigation {

// Raised for configuration and input errors anywhere in the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace irrigation
