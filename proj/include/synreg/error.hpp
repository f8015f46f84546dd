#pragma once

#include <stdexcept>
#include <string>

namespace synreg {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorClass { Validation, Io, Numeric };

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

private:
  ErrorClass cls_;
};

#define SYNREG_DEFINE_ERROR(Name, Class)                                        \
  class Name : public Error {                                                   \
  public:                                                                       \
    explicit Name(const std::string& what) : Error(ErrorClass::Class, what) {} \
  }

// Geometry
SYNREG_DEFINE_ERROR(DegenerateInput, Numeric);
SYNREG_DEFINE_ERROR(BehindCamera, Numeric);
// Mesh and image I/O
SYNREG_DEFINE_ERROR(ParseError, Validation);
SYNREG_DEFINE_ERROR(ValidationError, Validation);
SYNREG_DEFINE_ERROR(IoError, Io);
SYNREG_DEFINE_ERROR(SizeMismatch, Validation);
// Dataset
SYNREG_DEFINE_ERROR(ResampleExhausted, Numeric);
SYNREG_DEFINE_ERROR(InvalidRatios, Validation);
// Model
SYNREG_DEFINE_ERROR(InvalidConfig, Validation);
SYNREG_DEFINE_ERROR(ShapeMismatch, Validation);
SYNREG_DEFINE_ERROR(VersionMismatch, Validation);
SYNREG_DEFINE_ERROR(CorruptChecksum, Io);
// Training
SYNREG_DEFINE_ERROR(NonFiniteLoss, Numeric);

#undef SYNREG_DEFINE_ERROR

}  // namespace synreg
