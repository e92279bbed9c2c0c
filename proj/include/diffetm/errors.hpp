#pragma once

#include <stdexcept>
#include <string>

namespace diffetm {

/// Base of every error the library raises. Each subclass names one failure
/// kind so callers (and the CLI exit-code mapping) can dispatch on type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept = 0;
};

#define DIFFETM_DECLARE_ERROR(Name)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(what) {}          \
    const char* kind() const noexcept override { return #Name; }     \
  };

DIFFETM_DECLARE_ERROR(ShapeMismatch)
DIFFETM_DECLARE_ERROR(DomainError)
DIFFETM_DECLARE_ERROR(NotScalar)
DIFFETM_DECLARE_ERROR(AllTokensPruned)
DIFFETM_DECLARE_ERROR(EmptySplit)
DIFFETM_DECLARE_ERROR(InvalidSchedule)
DIFFETM_DECLARE_ERROR(InvalidConfig)
DIFFETM_DECLARE_ERROR(CorruptCheckpoint)
DIFFETM_DECLARE_ERROR(CorruptCache)
DIFFETM_DECLARE_ERROR(VocabularyMismatch)
DIFFETM_DECLARE_ERROR(IoError)

#undef DIFFETM_DECLARE_ERROR

}  // namespace diffetm
