#pragma once

#include <stdexcept>
#include <string>

namespace captrack {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CAPTRACK_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  };

CAPTRACK_DEFINE_ERROR(DegenerateFrame)
CAPTRACK_DEFINE_ERROR(InvalidArgument)
CAPTRACK_DEFINE_ERROR(AnchorOutOfRange)
CAPTRACK_DEFINE_ERROR(IoError)
CAPTRACK_DEFINE_ERROR(VersionMismatch)
CAPTRACK_DEFINE_ERROR(ChecksumMismatch)
CAPTRACK_DEFINE_ERROR(NonFiniteInput)
CAPTRACK_DEFINE_ERROR(EmptyDataset)
CAPTRACK_DEFINE_ERROR(ModeMismatch)
CAPTRACK_DEFINE_ERROR(ModelNonFinite)
CAPTRACK_DEFINE_ERROR(ProtocolError)
CAPTRACK_DEFINE_ERROR(BindError)

#undef CAPTRACK_DEFINE_ERROR

}  // namespace captrack
