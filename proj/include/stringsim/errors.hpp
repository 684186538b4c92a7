#pragma once

#include <stdexcept>
#include <string>

namespace stringsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define STRINGSIM_ERROR(Name)              \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

STRINGSIM_ERROR(SizeLimit);
STRINGSIM_ERROR(InvalidArgument);
STRINGSIM_ERROR(GaussViolation);
STRINGSIM_ERROR(InvalidProfile);
STRINGSIM_ERROR(DegenerateGeometry);
STRINGSIM_ERROR(ResonanceError);
STRINGSIM_ERROR(IllConditioned);
STRINGSIM_ERROR(KrylovBreakdown);
STRINGSIM_ERROR(ToleranceNotMet);
STRINGSIM_ERROR(InsufficientSpread);
STRINGSIM_ERROR(NoOscillation);
STRINGSIM_ERROR(IndexOutOfRange);
STRINGSIM_ERROR(ResonantDenominator);
STRINGSIM_ERROR(MemoryLimit);
STRINGSIM_ERROR(OutOfBracket);
STRINGSIM_ERROR(ConfigError);

#undef STRINGSIM_ERROR

}  // namespace stringsim
