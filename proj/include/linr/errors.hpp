#pragma once

#include <stdexcept>
#include <string>

namespace linr {

/// Base class for every failure raised by the codec.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LINR_DEFINE_ERROR(Name)             \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

LINR_DEFINE_ERROR(EmptyCloud);
LINR_DEFINE_ERROR(PyramidMismatch);
LINR_DEFINE_ERROR(InvalidOccupancy);
LINR_DEFINE_ERROR(ShapeError);
LINR_DEFINE_ERROR(IndexError);
LINR_DEFINE_ERROR(MissingGroundTruth);
LINR_DEFINE_ERROR(ScaleMismatch);
LINR_DEFINE_ERROR(DecodeError);
LINR_DEFINE_ERROR(NumericError);
LINR_DEFINE_ERROR(CountMismatch);
LINR_DEFINE_ERROR(ParseError);
LINR_DEFINE_ERROR(DepthError);
LINR_DEFINE_ERROR(IoError);

#undef LINR_DEFINE_ERROR

}  // namespace linr
