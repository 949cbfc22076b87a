#pragma once

#include <stdexcept>
#include <string>

namespace tl {

// Root of every error the library throws. Each subclass names the failing
// contract so callers (and the CLI) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TL_DEFINE_ERROR(Name)             \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

TL_DEFINE_ERROR(DimensionError)
TL_DEFINE_ERROR(ContractViolation)
TL_DEFINE_ERROR(ConfigError)
TL_DEFINE_ERROR(CheckpointError)
TL_DEFINE_ERROR(SamplingError)
TL_DEFINE_ERROR(IndexError)
TL_DEFINE_ERROR(SupportError)
TL_DEFINE_ERROR(LabelError)
TL_DEFINE_ERROR(ProtocolError)
TL_DEFINE_ERROR(LoadError)
TL_DEFINE_ERROR(IoError)

#undef TL_DEFINE_ERROR

}  // namespace tl
