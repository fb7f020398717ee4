#pragma once

#include <stdexcept>
#include <string>

namespace rlaux {

// Every failure raised by the library derives from Error so callers can catch
// one type at the CLI boundary.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RLAUX_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

RLAUX_DEFINE_ERROR(DimensionError)
RLAUX_DEFINE_ERROR(LabelError)
RLAUX_DEFINE_ERROR(GraphError)
RLAUX_DEFINE_ERROR(DomainError)
RLAUX_DEFINE_ERROR(DistributionError)
RLAUX_DEFINE_ERROR(CheckpointError)
RLAUX_DEFINE_ERROR(ConfigError)
RLAUX_DEFINE_ERROR(ProtocolError)
RLAUX_DEFINE_ERROR(ActionError)
RLAUX_DEFINE_ERROR(FormatError)
RLAUX_DEFINE_ERROR(IoError)

#undef RLAUX_DEFINE_ERROR

}  // namespace rlaux
