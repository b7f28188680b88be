#pragma once

#include <stdexcept>
#include <string>

namespace dbp {

/// Missing, truncated or inconsistent files.
struct DataError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

/// NaN/Inf produced during reconstruction or training.
struct NumericError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

} // namespace dbp
