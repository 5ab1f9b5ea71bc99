#pragma once

#include <stdexcept>
#include <string>

namespace shapesel {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SHAPESEL_DEFINE_ERROR(Name)                 \
  class Name : public Error {                       \
   public:                                          \
    explicit Name(const std::string& what)          \
        : Error(std::string(#Name ": ") + what) {}  \
  }

SHAPESEL_DEFINE_ERROR(DegenerateMatrix);
SHAPESEL_DEFINE_ERROR(DegenerateMesh);
SHAPESEL_DEFINE_ERROR(NonWatertight);
SHAPESEL_DEFINE_ERROR(OutOfBounds);
SHAPESEL_DEFINE_ERROR(InsufficientShapes);
SHAPESEL_DEFINE_ERROR(UnknownClass);
SHAPESEL_DEFINE_ERROR(MismatchedLengths);
SHAPESEL_DEFINE_ERROR(ZeroScale);
SHAPESEL_DEFINE_ERROR(PlacementFailure);
SHAPESEL_DEFINE_ERROR(NonFinite);
SHAPESEL_DEFINE_ERROR(EmptyScenes);
SHAPESEL_DEFINE_ERROR(DegenerateConfiguration);
SHAPESEL_DEFINE_ERROR(InvalidArgument);
SHAPESEL_DEFINE_ERROR(FormatError);

#undef SHAPESEL_DEFINE_ERROR

}  // namespace shapesel
