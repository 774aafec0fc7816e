#pragma once

#include <stdexcept>
#include <string>

namespace webweave {

/// Precondition or domain violation in an operation's arguments.
class InvalidArgument : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Operation requested on an input it does not handle (e.g. duality for crossing laws).
class Unsupported : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

/// A configured memory or size budget would be exceeded.
class ResourceLimit : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &message)
{
  if (!cond) throw InvalidArgument(message);
}

} // namespace webweave
