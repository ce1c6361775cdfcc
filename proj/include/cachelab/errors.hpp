#pragma once

#include <stdexcept>
#include <string>

namespace cachelab {

/// Base for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CACHELAB_DEFINE_ERROR(Name) \
  class Name : public Error {       \
   public:                          \
    using Error::Error;             \
  }

CACHELAB_DEFINE_ERROR(FieldTooLong);
CACHELAB_DEFINE_ERROR(TemplateInvalid);
CACHELAB_DEFINE_ERROR(RecordInvalid);
CACHELAB_DEFINE_ERROR(DomainError);
CACHELAB_DEFINE_ERROR(DebugDisabled);
CACHELAB_DEFINE_ERROR(BudgetExceeded);
CACHELAB_DEFINE_ERROR(TooFewSamples);
CACHELAB_DEFINE_ERROR(DegenerateProfile);
CACHELAB_DEFINE_ERROR(OverlappingProfiles);
CACHELAB_DEFINE_ERROR(EmptyCorpus);
CACHELAB_DEFINE_ERROR(FieldExhausted);
CACHELAB_DEFINE_ERROR(CorpusTooSmall);
CACHELAB_DEFINE_ERROR(Exhausted);
CACHELAB_DEFINE_ERROR(ConfigInvalid);
CACHELAB_DEFINE_ERROR(IoError);
CACHELAB_DEFINE_ERROR(ProtocolError);

#undef CACHELAB_DEFINE_ERROR

}  // namespace cachelab
