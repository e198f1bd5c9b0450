#pragma once

#include <stdexcept>
#include <string>

namespace mhefnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MHEFNN_ERROR(Name)          \
  class Name : public Error {       \
   public:                          \
    using Error::Error;             \
  };

MHEFNN_ERROR(InvalidArgument)
MHEFNN_ERROR(DimensionMismatch)
MHEFNN_ERROR(BoundaryActivation)
MHEFNN_ERROR(ZeroColumn)
MHEFNN_ERROR(RankDeficientW)
MHEFNN_ERROR(EmptyIntersection)
MHEFNN_ERROR(CertificateFailed)
MHEFNN_ERROR(ConstructionFailed)
MHEFNN_ERROR(UnsupportedShape)
MHEFNN_ERROR(InfeasibleStart)
MHEFNN_ERROR(MissingColumn)
MHEFNN_ERROR(ConfigError)

#undef MHEFNN_ERROR

class MalformedCsv : public Error {
 public:
  MalformedCsv(const std::string& what, long line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

}  // namespace mhefnn
